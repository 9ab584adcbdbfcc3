#include "henkf/taper.hpp"

#include <cmath>
#include <vector>

#include "henkf/errors.hpp"

namespace henkf {

double wendland_c2(double d, double c) {
  if (c <= 0.0) throw ParameterDomainError("wendland range must be positive");
  const double u = d / c;
  if (u >= 1.0) return 0.0;
  const double base = 1.0 - u;
  const double b2 = base * base;
  return b2 * b2 * (4.0 * u + 1.0);
}

double TaperSpec::operator()(Index i, Index j) const {
  if (family == Family::identity) return 1.0;
  const double d = distance ? distance(i, j) : std::abs(static_cast<double>(i - j));
  return wendland_c2(d, range);
}

TaperSpec TaperSpec::identity_taper() { return TaperSpec{}; }

TaperSpec TaperSpec::grid(double range) {
  TaperSpec spec;
  spec.family = Family::wendland;
  spec.range = range;
  return spec;
}

TaperSpec TaperSpec::circle(double range, Index n) {
  TaperSpec spec;
  spec.family = Family::wendland;
  spec.range = range;
  spec.distance = [n](Index i, Index j) {
    const double d = std::abs(static_cast<double>(i - j));
    return std::min(d, static_cast<double>(n) - d);
  };
  return spec;
}

TaperSpec TaperSpec::diagonal() {
  TaperSpec spec;
  spec.family = Family::wendland;
  spec.range = 0.5;  // support below the grid spacing: off-diagonals vanish
  return spec;
}

SparseMatrix taper_matrix(const TaperSpec& spec, Index n) {
  if (spec.range <= 0.0) throw ParameterDomainError("taper range must be positive");
  std::vector<Eigen::Triplet<double>> entries;
  if (spec.family == TaperSpec::Family::identity) {
    entries.reserve(static_cast<std::size_t>(n * n));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) entries.emplace_back(i, j, 1.0);
  } else {
    for (Index i = 0; i < n; ++i) {
      entries.emplace_back(i, i, 1.0);
      for (Index j = i + 1; j < n; ++j) {
        const double v = spec(i, j);
        if (v != 0.0) {
          entries.emplace_back(i, j, v);
          entries.emplace_back(j, i, v);
        }
      }
    }
  }
  SparseMatrix t(n, n);
  t.setFromTriplets(entries.begin(), entries.end());
  return t;
}

Matrix taper_cross_matrix(const TaperSpec& spec, Index rows, Index cols,
                          const std::function<double(Index, Index)>& distance) {
  Matrix t(rows, cols);
  if (spec.family == TaperSpec::Family::identity) {
    t.setOnes();
    return t;
  }
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) t(i, j) = wendland_c2(distance(i, j), spec.range);
  return t;
}

}  // namespace henkf
