#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace henkf::experiments {

struct RunConfig {
  std::string experiment = "custom";  // fig2|table2|table3|table4|custom
  std::uint64_t seed = 1;
  double scale = 1.0;  // multiplies replication counts only
  std::map<std::string, std::string> overrides;  // --set key=value
  std::string out_dir = "runs/out";
  int workers = 1;
  std::string data_path;  // cloud CSV for table3

  double num(const std::string& key, double fallback) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  // Replication counts scale with the factor; model constants never do.
  int scaled(int full_count) const;
};

// Parse a "key=value" token into the override map.
void parse_override(RunConfig& config, const std::string& token);

}  // namespace henkf::experiments
