#pragma once

#include <string>
#include <vector>

namespace henkf::experiments {

// Minimal comma-separated table; doubles are written with 17 significant
// digits so parsing reproduces the in-memory value exactly.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string to_string() const;
  static CsvTable parse(const std::string& text);
  static std::string cell(double value);
  static double parse_cell(const std::string& cell);
};

}  // namespace henkf::experiments
