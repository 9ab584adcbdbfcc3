// Stochastic EnKF forecast/update and the state-augmentation wrapper.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "henkf/gain.hpp"
#include "henkf/model.hpp"

namespace henkf {

// Apply the evolution map to every member; no innovation noise is added here
// (it enters through Q in the gain and the prior perturbation of the update).
StateEnsemble enkf_forecast(const HssmModel& model, const StateEnsemble& ens,
                            const ParamVector& theta);

// One stochastic update member: prior = forecast + w, pseudo-observation
// ytilde = H prior + v, shift by gain (y - ytilde). Draw order per member:
// the n innovation normals (when Q != 0), then the m observation normals.
Vector enkf_member_update(const Vector& forecast_member, const Vector& y,
                          const Matrix& gain, const Matrix& obs_matrix,
                          const Matrix& chol_innovation, const Matrix& chol_obs_noise,
                          Rng& rng);

// The perturbed-observation EnKF update of a forecast ensemble. Each member j
// draws from stream(seed, update, t, j, sweep).
StateEnsemble enkf_update(const StateEnsemble& fore, const Vector& y,
                          const HssmModel& model, const ParamVector& theta,
                          const TaperSpec& taper, std::uint64_t seed,
                          std::uint64_t sweep = 0);

// Update with a nonlinear observation operator: pseudo-observations
// ztilde_j = obs_fn(prior_j, rng), gain from the (optionally tapered) sample
// cross-covariance of states and pseudo-observations.
StateEnsemble enkf_update_nonlinear_obs(
    const StateEnsemble& fore, const Vector& z,
    const std::function<Vector(const Vector& x, Rng& rng)>& obs_fn,
    const Matrix& innovation_cov, const Matrix* taper_xy, const Matrix* taper_yy,
    std::uint64_t seed);

struct AugmentedParam {
  std::string name;
  double artificial_sd = 0.0;
  // Initial-ensemble draw for this coordinate; defaults to the component of
  // a model.param_init draw.
  std::function<double(Rng&)> init_draw;
};

// Append the listed scalar parameters to the state vector: the evolution
// applies the original map at the embedded values and the parameter block
// follows a random walk with the stated sd (from time `first_noise_time`).
// H gains zero columns. Augmenting nothing returns the model unchanged.
HssmModel augment_state(const HssmModel& model, const std::vector<AugmentedParam>& params,
                        int first_noise_time = 1);

// Extend a taper over the augmented state: parameter coordinates are at
// distance zero from everything (no localization on parameters).
TaperSpec augment_taper(const TaperSpec& base, Index n_state);

}  // namespace henkf
