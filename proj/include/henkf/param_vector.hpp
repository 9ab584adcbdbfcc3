#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "henkf/errors.hpp"
#include "henkf/types.hpp"

namespace henkf {

// Parameter vector with optional component names. Positivity-constrained
// components are stored on log scale by convention (names prefixed log_).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(Vector values) : values_(std::move(values)) {}
  ParamVector(Vector values, std::vector<std::string> names)
      : values_(std::move(values)),
        names_(std::make_shared<const std::vector<std::string>>(std::move(names))) {
    if (names_->size() != static_cast<std::size_t>(values_.size()))
      throw DimensionError("parameter names do not match value count");
  }

  static ParamVector scalar(double v) { return ParamVector(Vector::Constant(1, v)); }
  static ParamVector empty() { return ParamVector(Vector()); }

  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_(i); }
  double& operator[](Index i) { return values_(i); }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

  Index index_of(std::string_view name) const {
    if (!names_) return -1;
    for (std::size_t i = 0; i < names_->size(); ++i)
      if ((*names_)[i] == name) return static_cast<Index>(i);
    return -1;
  }
  bool has(std::string_view name) const { return index_of(name) >= 0; }
  double get(std::string_view name) const {
    const Index i = index_of(name);
    if (i < 0) throw ConfigError("unknown parameter: " + std::string(name));
    return values_(i);
  }
  const std::shared_ptr<const std::vector<std::string>>& names() const { return names_; }

 private:
  Vector values_;
  std::shared_ptr<const std::vector<std::string>> names_;
};

}  // namespace henkf
