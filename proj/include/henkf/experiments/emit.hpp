#pragma once

#include <map>
#include <string>
#include <vector>

#include "henkf/experiments/csv.hpp"
#include "henkf/experiments/run_config.hpp"

namespace henkf::experiments {

struct RunOutputs {
  CsvTable scores;  // columns: method,scenario,metric,value,n_reps
  std::vector<std::string> diagnostics;        // JSON lines
  std::map<std::string, CsvTable> plotdata;    // file stem -> table

  void add_score(const std::string& method, const std::string& scenario,
                 const std::string& metric, double value, long n_reps);
};

CsvTable make_scores_table();

// Write config.json (resolved config + seed + version string), scores.csv,
// diagnostics.jsonl, and plotdata/*.csv under the run directory. Contains no
// timestamps: a rerun with the same config and seed is byte-identical.
void emit_run(const RunOutputs& outputs, const RunConfig& config);

}  // namespace henkf::experiments
