#include "henkf/genkf.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "henkf/stats.hpp"

namespace henkf {

namespace {

std::string theta_key(const ParamVector& theta) {
  return std::string(reinterpret_cast<const char*>(theta.values().data()),
                     sizeof(double) * theta.size());
}

struct GainEntry {
  Matrix obs_matrix, gain, chol_q, chol_r;
};

}  // namespace

GenkfState genkf_step(const HssmModel& model, const Matrix& prev_x,
                      const std::vector<ParamVector>& prev_theta,
                      const std::optional<Matrix>& prev_y, const Vector& z, int t,
                      const GenkfOptions& options) {
  if (!model.forecast_independent)
    throw ConfigError("genkf requires a forecast-independent model");
  const Index n = model.state_dim;
  const Index chains = prev_x.cols();
  if (static_cast<Index>(prev_theta.size()) != chains)
    throw DimensionError("one previous theta per chain required");

  // Shared forecast of all chains.
  Matrix fore(n, chains);
  for (Index i = 0; i < chains; ++i)
    fore.col(i) = model.evolve(prev_x.col(i), prev_theta[i], t);
  require_finite(fore, "evolution map");
  StateEnsemble fore_ens{fore, t, EnsembleKind::forecast};

  const ObsModel& obs = model.transformation;
  const bool rainfall_kappa =
      obs.family == ObsModel::Family::rainfall && obs.kappa_theta_index >= 0;
  const bool has_theta_fcd = static_cast<bool>(model.theta_fcd_filter);
  const bool scale_mixture = obs.family == ObsModel::Family::scale_mixture_t;
  const bool theta_free = prev_theta[0].size() == 0;
  if (!theta_free && !has_theta_fcd && !scale_mixture && !rainfall_kappa)
    throw ConfigError("no full-conditional sampler available for theta");

  // Per-theta gain cache, rebuilt lazily as chains move.
  std::unordered_map<std::string, GainEntry> cache;
  auto entry_for = [&](const ParamVector& theta) -> const GainEntry& {
    const std::string key = theta_key(theta);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    GainEntry entry;
    entry.obs_matrix = model.obs_matrix(theta, t);
    const Matrix r = model.obs_noise(theta, t);
    const Matrix q = model.innovation(theta, t);
    const GaussianSummary summary = regularized_cov(fore_ens, options.taper, q);
    entry.gain = kalman_gain(summary, entry.obs_matrix, r);
    entry.chol_q = (q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0)
                       ? psd_cholesky(q, "innovation covariance Q")
                       : Matrix();
    entry.chol_r = psd_cholesky(r, "observation noise R");
    return cache.emplace(key, std::move(entry)).first->second;
  };

  GenkfState state;
  state.theta = prev_theta;
  state.x = fore;  // overwritten in the first sweep
  const Index m = z.size();
  state.y.resize(m, chains);
  if (prev_y) {
    if (prev_y->rows() != m || prev_y->cols() != chains)
      throw DimensionError("previous latent observations have the wrong shape");
    state.y = *prev_y;
  } else if (obs.is_identity() || scale_mixture) {
    state.y = z.replicate(1, chains);
  } else {
    // Initialize from the conditional given the forecast member.
    for (Index i = 0; i < chains; ++i) {
      const GainEntry& e = entry_for(state.theta[i]);
      Rng rng = stream(options.seed, RngPhase::obs_fcd, t, i, 1000000);
      state.y.col(i) =
          sample_y_fcd(z, e.obs_matrix * fore.col(i), obs, state.theta[i], rng);
    }
  }

  Vector prev_theta_mean;
  for (int sweep = 1; sweep <= options.sweeps; ++sweep) {
    for (Index i = 0; i < chains; ++i) {
      // (a) state shift toward the chain's latent observation.
      const GainEntry& e = entry_for(state.theta[i]);
      Rng xrng = stream(options.seed, RngPhase::update, t, i, sweep - 1);
      state.x.col(i) = enkf_member_update(fore.col(i), state.y.col(i), e.gain,
                                          e.obs_matrix, e.chol_q, e.chol_r, xrng);

      const Vector hx = e.obs_matrix * state.x.col(i);

      // Rainfall with unknown power: kappa moves before the latent draw.
      if (rainfall_kappa) {
        Rng krng = stream(options.seed, RngPhase::mcmc, t, i, sweep - 1);
        auto log_prior = [&](double kappa) {
          ParamVector cand = state.theta[i];
          cand[obs.kappa_theta_index] = kappa;
          return model.param_transition.log_density
                     ? model.param_transition.log_density(cand, prev_theta[i], t)
                     : 0.0;
        };
        const double kappa =
            mh_update_kappa(z, hx, obs.sigma, state.theta[i][obs.kappa_theta_index],
                            log_prior, options.kappa_proposal_sd, krng);
        state.theta[i][obs.kappa_theta_index] = kappa;
      }

      // (b) latent observation.
      if (!obs.is_identity() && !scale_mixture) {
        Rng yrng = stream(options.seed, RngPhase::obs_fcd, t, i, sweep - 1);
        const Vector current = state.y.col(i);
        state.y.col(i) = sample_y_fcd(z, hx, obs, state.theta[i], yrng, &current);
      }

      // (c) parameters.
      if (has_theta_fcd) {
        Rng trng = stream(options.seed, RngPhase::theta_fcd, t, i, sweep - 1);
        state.theta[i] = model.theta_fcd_filter(z, state.y.col(i), state.x.col(i),
                                                prev_theta[i], t, trng);
      } else if (scale_mixture) {
        Rng trng = stream(options.seed, RngPhase::theta_fcd, t, i, sweep - 1);
        state.theta[i] = ParamVector(sample_scale_params_fcd(
            state.y.col(i), hx, obs.sigma, obs.kappa / 2.0, obs.kappa / 2.0, trng));
      }
    }

    // Convergence diagnostic: drift of the chain-averaged theta.
    if (state.theta[0].size() > 0) {
      Vector mean = Vector::Zero(state.theta[0].size());
      for (const ParamVector& th : state.theta) mean += th.values();
      mean /= double(chains);
      if (sweep > 1)
        state.theta_drift = (mean - prev_theta_mean).cwiseAbs().maxCoeff();
      prev_theta_mean = mean;
    }
  }
  require_finite(state.x, "genkf sweep");
  return state;
}

}  // namespace henkf
