#include "henkf/experiments/run_config.hpp"

#include <cmath>
#include <stdexcept>

#include "henkf/errors.hpp"

namespace henkf::experiments {

double RunConfig::num(const std::string& key, double fallback) const {
  auto it = overrides.find(key);
  if (it == overrides.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("override " + key + " is not numeric: " + it->second);
  }
}

std::string RunConfig::str(const std::string& key, const std::string& fallback) const {
  auto it = overrides.find(key);
  return it == overrides.end() ? fallback : it->second;
}

int RunConfig::scaled(int full_count) const {
  return std::max(1, static_cast<int>(std::lround(full_count * scale)));
}

void parse_override(RunConfig& config, const std::string& token) {
  const std::size_t eq = token.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("expected key=value, got: " + token);
  config.overrides[token.substr(0, eq)] = token.substr(eq + 1);
}

}  // namespace henkf::experiments
