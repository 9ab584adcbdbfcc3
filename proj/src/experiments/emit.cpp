#include "henkf/experiments/emit.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "henkf/errors.hpp"

#ifndef HENKF_VERSION_STRING
#define HENKF_VERSION_STRING "unknown"
#endif

namespace henkf::experiments {

namespace fs = std::filesystem;

void RunOutputs::add_score(const std::string& method, const std::string& scenario,
                           const std::string& metric, double value, long n_reps) {
  if (scores.header.empty()) scores = make_scores_table();
  scores.add_row({method, scenario, metric, CsvTable::cell(value),
                  std::to_string(n_reps)});
}

CsvTable make_scores_table() {
  CsvTable table;
  table.header = {"method", "scenario", "metric", "value", "n_reps"};
  return table;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IngestionError("write failed: " + path.string());
}

}  // namespace

void emit_run(const RunOutputs& outputs, const RunConfig& config) {
  const fs::path dir(config.out_dir);
  fs::create_directories(dir);
  fs::create_directories(dir / "plotdata");

  nlohmann::json cfg;
  cfg["experiment"] = config.experiment;
  cfg["seed"] = config.seed;
  cfg["scale"] = config.scale;
  cfg["workers"] = config.workers;
  cfg["out_dir"] = config.out_dir;
  cfg["data"] = config.data_path;
  cfg["overrides"] = config.overrides;
  cfg["version"] = HENKF_VERSION_STRING;
  write_file(dir / "config.json", cfg.dump(2) + "\n");

  write_file(dir / "scores.csv", outputs.scores.header.empty()
                                     ? make_scores_table().to_string()
                                     : outputs.scores.to_string());

  std::string diag;
  for (const std::string& line : outputs.diagnostics) diag += line + "\n";
  write_file(dir / "diagnostics.jsonl", diag);

  for (const auto& [stem, table] : outputs.plotdata)
    write_file(dir / "plotdata" / (stem + ".csv"), table.to_string());
}

}  // namespace henkf::experiments
