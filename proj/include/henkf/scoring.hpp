// Proper scoring rules and the 1-D earth-mover's distance.
#pragma once

#include <span>

#include "henkf/types.hpp"

namespace henkf {

struct ScoreReport {
  double mspe = 0.0;
  double crps = 0.0;
  double emd = 0.0;
  long n_targets = 0;
};

// Squared error of the (weighted) sample mean against the truth.
double mspe(std::span<const double> samples, double truth,
            std::span<const double> weights = {});

// Ensemble CRPS: (1/K) sum |x_k - y| - 1/(2K^2) sum |x_k - x_l|, in
// O(K log K) via sorting; weighted form for particle output.
double crps_ensemble(std::span<const double> samples, double truth,
                     std::span<const double> weights = {});

// Exact Wasserstein-1 distance between two weighted 1-D samples via the
// quantile-function integral.
double emd_1d(std::span<const double> a, std::span<const double> wa,
              std::span<const double> b, std::span<const double> wb);

// Running accumulator over many scored targets.
class ScoreAccumulator {
 public:
  void add(std::span<const double> samples, double truth,
           std::span<const double> weights = {});
  ScoreReport report() const;

 private:
  double mspe_sum_ = 0.0;
  double crps_sum_ = 0.0;
  long count_ = 0;
};

}  // namespace henkf
