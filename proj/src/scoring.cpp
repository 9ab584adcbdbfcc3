#include "henkf/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "henkf/errors.hpp"

namespace henkf {

namespace {

std::vector<double> effective_weights(std::size_t n, std::span<const double> weights) {
  if (weights.empty()) return std::vector<double>(n, 1.0 / double(n));
  if (weights.size() != n) throw DimensionError("weights do not match sample count");
  std::vector<double> w(weights.begin(), weights.end());
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0.0) throw ParameterDomainError("weights must have positive mass");
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double mspe(std::span<const double> samples, double truth,
            std::span<const double> weights) {
  if (samples.empty()) throw DimensionError("mspe needs at least one sample");
  const std::vector<double> w = effective_weights(samples.size(), weights);
  double mean = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) mean += w[i] * samples[i];
  return (mean - truth) * (mean - truth);
}

double crps_ensemble(std::span<const double> samples, double truth,
                     std::span<const double> weights) {
  if (samples.size() < 2) throw DegenerateEnsembleError("crps needs at least 2 samples");
  const std::size_t k = samples.size();
  const std::vector<double> w = effective_weights(k, weights);

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a] < samples[b]; });

  double first = 0.0;
  for (std::size_t i = 0; i < k; ++i) first += w[i] * std::abs(samples[i] - truth);

  // sum_{i<j} w_i w_j (x_j - x_i) over the sorted order.
  double pair_sum = 0.0, w_prefix = 0.0, wx_prefix = 0.0;
  for (std::size_t idx : order) {
    pair_sum += w[idx] * (samples[idx] * w_prefix - wx_prefix);
    w_prefix += w[idx];
    wx_prefix += w[idx] * samples[idx];
  }
  return first - pair_sum;  // (1/2) * 2 * pair_sum
}

double emd_1d(std::span<const double> a, std::span<const double> wa,
              std::span<const double> b, std::span<const double> wb) {
  if (a.empty() || b.empty()) throw DegenerateEnsembleError("emd needs nonempty samples");
  const std::vector<double> wa_n = effective_weights(a.size(), wa);
  const std::vector<double> wb_n = effective_weights(b.size(), wb);

  struct Atom {
    double x, wa, wb;
  };
  std::vector<Atom> atoms;
  atoms.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) atoms.push_back({a[i], wa_n[i], 0.0});
  for (std::size_t i = 0; i < b.size(); ++i) atoms.push_back({b[i], 0.0, wb_n[i]});
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& l, const Atom& r) { return l.x < r.x; });

  // Integral over x of |F_a(x) - F_b(x)|.
  double emd = 0.0, fa = 0.0, fb = 0.0;
  for (std::size_t i = 0; i + 1 <= atoms.size(); ++i) {
    fa += atoms[i].wa;
    fb += atoms[i].wb;
    if (i + 1 < atoms.size()) emd += std::abs(fa - fb) * (atoms[i + 1].x - atoms[i].x);
  }
  return emd;
}

void ScoreAccumulator::add(std::span<const double> samples, double truth,
                           std::span<const double> weights) {
  mspe_sum_ += mspe(samples, truth, weights);
  crps_sum_ += crps_ensemble(samples, truth, weights);
  ++count_;
}

ScoreReport ScoreAccumulator::report() const {
  ScoreReport out;
  out.n_targets = count_;
  if (count_ > 0) {
    out.mspe = mspe_sum_ / count_;
    out.crps = crps_sum_ / count_;
  }
  return out;
}

}  // namespace henkf
