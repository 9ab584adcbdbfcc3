#include "henkf/experiments/cloud_data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "henkf/builtin_models.hpp"
#include "henkf/errors.hpp"
#include "henkf/stats.hpp"

namespace henkf::experiments {

std::vector<Index> CloudDataset::observed_at(int t) const {
  std::vector<Index> out;
  for (Index l = 0; l < n_sites(); ++l)
    if (!heldout[t - 1][l]) out.push_back(l);
  return out;
}

long CloudDataset::heldout_count() const {
  long count = 0;
  for (const auto& row : heldout)
    for (bool h : row)
      if (h) ++count;
  return count;
}

CloudDataset ingest_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open cloud data file: " + path);
  std::vector<std::vector<int>> rows;
  std::string line;
  int line_no = 0;
  bool maybe_header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<int> row;
    std::istringstream cells(line);
    std::string cell;
    int col = 0;
    bool numeric = true;
    while (std::getline(cells, cell, ',')) {
      ++col;
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(cell, &used);
      } catch (const std::exception&) {
        numeric = false;
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
        ++used;
      if (!numeric || used != cell.size()) {
        if (maybe_header) {
          numeric = false;
          break;  // header row: skip it
        }
        throw IngestionError("non-numeric cloud datum at row " +
                             std::to_string(line_no) + ", column " +
                             std::to_string(col));
      }
      if (value < 0.0 || value != std::floor(value))
        throw IngestionError("cloud data must be nonnegative integers; offending "
                             "entry at row " +
                             std::to_string(line_no) + ", column " +
                             std::to_string(col));
      row.push_back(static_cast<int>(value));
    }
    if (!numeric && maybe_header) {
      maybe_header = false;
      continue;
    }
    maybe_header = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw IngestionError("ragged cloud data at row " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IngestionError("cloud data file is empty: " + path);

  CloudDataset data;
  data.counts.resize(static_cast<Index>(rows.size()),
                     static_cast<Index>(rows.front().size()));
  for (Index t = 0; t < data.counts.rows(); ++t)
    for (Index l = 0; l < data.counts.cols(); ++l) data.counts(t, l) = rows[t][l];
  data.heldout.assign(rows.size(), std::vector<bool>(rows.front().size(), false));
  return data;
}

void draw_holdout_mask(CloudDataset& data, double fraction, std::uint64_t seed) {
  const Index n = data.n_sites();
  const auto per_row = static_cast<Index>(std::ceil(fraction * double(n)));
  data.heldout.assign(data.counts.rows(), std::vector<bool>(n, false));
  for (int t = 1; t <= data.horizon(); ++t) {
    Rng rng = stream(seed, RngPhase::mask, t);
    Index chosen = 0;
    while (chosen < per_row) {
      const Index pick = static_cast<Index>(rng.uniform_index(n));
      if (!data.heldout[t - 1][pick]) {
        data.heldout[t - 1][pick] = true;
        ++chosen;
      }
    }
  }
}

CloudDataset synth_cloud(const std::map<std::string, double>& overrides,
                         std::uint64_t seed) {
  const PaperModel pm = build_paper_model(PaperModelName::cloud, overrides);
  const HssmModel& model = pm.model;
  const Index n = model.state_dim;
  const int horizon = pm.default_horizon;

  Rng rng = stream(seed, RngPhase::data, 0, 777);
  ParamVector theta = model.param_init.sample(rng);
  Vector x = mvn_sample(model.init_mean,
                        psd_cholesky(model.init_cov, "initial covariance"), rng);

  CloudDataset data;
  data.counts.resize(horizon, n);
  data.true_theta.resize(theta.size(), horizon);
  data.true_states.resize(n, horizon);
  for (int t = 1; t <= horizon; ++t) {
    theta = model.param_transition.sample(theta, t, rng);
    x = model.evolve(x, theta, t);
    x = mvn_sample(x, psd_cholesky(model.innovation(theta, t), "Q"), rng);
    const double sigma = std::exp(theta.get("log_sigma"));
    for (Index l = 0; l < n; ++l) {
      const double y = x(l) + sigma * rng.normal();
      data.counts(t - 1, l) = rng.poisson(std::exp(std::min(y, 25.0)));
    }
    data.true_theta.col(t - 1) = theta.values();
    data.true_states.col(t - 1) = x;
  }
  data.heldout.assign(horizon, std::vector<bool>(n, false));
  return data;
}

}  // namespace henkf::experiments
