// Weighted particle systems over parameter trajectories, each particle
// carrying its own state (sub-)ensemble.
#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "henkf/ensemble.hpp"
#include "henkf/param_vector.hpp"
#include "henkf/rng.hpp"

namespace henkf {

// Parameter-path genealogy node; resampling shares tails by reference.
struct ThetaPathNode {
  ParamVector value;
  std::shared_ptr<const ThetaPathNode> parent;
};

std::shared_ptr<const ThetaPathNode> extend_path(
    std::shared_ptr<const ThetaPathNode> parent, ParamVector value);

// Path values theta_{1:t}, oldest first.
std::vector<ParamVector> path_values(const std::shared_ptr<const ThetaPathNode>& head);

struct Particle {
  std::shared_ptr<const ThetaPathNode> theta_path;
  std::shared_ptr<const StateEnsemble> ens;
  double weight = 0.0;  // normalized
  // Filtered ensembles x_{1:t|t} when trajectory storage is on (smoother use).
  std::vector<std::shared_ptr<const StateEnsemble>> state_history;

  const ParamVector& theta() const { return theta_path->value; }
};

struct ParticleSystem {
  std::vector<Particle> particles;
  int time_index = 0;

  Index size() const { return static_cast<Index>(particles.size()); }
  double ess() const;
  Vector weights() const;
  // Number of distinct path roots (ancestors at time 1).
  int unique_root_ancestors() const;
  // Weighted mean of a scalar view of theta.
  double weighted_theta_mean(Index component) const;
};

// Normalize log weights in place: subtract the max, exponentiate, normalize.
// Throws DegeneracyError (reporting the max raw log weight) if all are -inf.
std::vector<double> normalize_log_weights(const std::vector<double>& log_weights);

enum class ResampleScheme { multinomial, systematic };

// Indices of the survivors, by scheme.
std::vector<Index> resample_indices(const Vector& weights, ResampleScheme scheme,
                                    Rng& rng);

// Equal-weight resampling; particle payloads are shared, not copied.
ParticleSystem resample(const ParticleSystem& system, ResampleScheme scheme, Rng& rng);

// Kernel shrinkage refresh for static parameters:
//   theta_new = a theta + (1-a) mean + h V^(1/2) eps,  a = sqrt(1 - h^2),
// preserving the weighted mean and covariance in expectation. Falls back to
// diagonal jitter when the weighted covariance is singular.
Matrix liu_west_refresh(const Matrix& thetas, const Vector& weights, double h,
                        Rng& rng);

}  // namespace henkf
