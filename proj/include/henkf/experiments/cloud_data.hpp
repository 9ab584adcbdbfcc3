#pragma once

#include <map>
#include <string>
#include <vector>

#include "henkf/types.hpp"

namespace henkf::experiments {

// Counts on a spatial transect over time, with a held-out test mask.
struct CloudDataset {
  Eigen::MatrixXi counts;                    // T x n
  std::vector<std::vector<bool>> heldout;    // T x n, true = test cell
  // Surrogate generator truth (empty for ingested data).
  Matrix true_theta;   // 6 x T
  Matrix true_states;  // n x T

  int horizon() const { return static_cast<int>(counts.rows()); }
  Index n_sites() const { return counts.cols(); }
  std::vector<Index> observed_at(int t) const;  // 1-based t
  long heldout_count() const;
};

// Parse a CSV of T rows by n integer columns (optional header row). Negative
// or non-integer entries raise IngestionError naming the row and column.
CloudDataset ingest_cloud_csv(const std::string& path);

// Mark ceil(fraction * n) random cells per row as held out.
void draw_holdout_mask(CloudDataset& data, double fraction, std::uint64_t seed);

// Forward simulation of the cloud model (parameters random-walking from
// their initial values); accepts the cloud model's overrides.
CloudDataset synth_cloud(const std::map<std::string, double>& overrides,
                         std::uint64_t seed);

}  // namespace henkf::experiments
