#include "henkf/penkf.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "henkf/filter.hpp"
#include "henkf/stats.hpp"

namespace henkf {

namespace {

ParamVector propose_theta(const HssmModel& model, const Proposal* proposal,
                          const ParamVector& prev, int t, Rng& rng) {
  if (proposal != nullptr) return proposal->sample(prev, t, rng);
  if (!model.param_transition.sample)
    throw ConfigError("no parameter proposal or transition sampler available");
  return model.param_transition.sample(prev, t, rng);
}

double proposal_correction(const HssmModel& model, const Proposal* proposal,
                           const ParamVector& cur, const ParamVector& prev, int t) {
  if (proposal == nullptr) return 0.0;  // q = p_t cancels
  double corr = -proposal->log_density(cur, prev, t);
  if (model.param_transition.log_density)
    corr += model.param_transition.log_density(cur, prev, t);
  return corr;
}

// Filtered members for one particle: for smooth transformation layers each
// member first draws its latent observation from the coordinate-wise Laplace
// Gaussian, then receives the EnKF shift toward it.
Matrix update_particle_members(const HssmModel& model, const Matrix& fore,
                               const Vector& z, const ParamVector& theta, int t,
                               const GaussianSummary& summary, std::uint64_t seed,
                               Index particle_index, Index n_members_global,
                               std::uint64_t sweep) {
  const Index n = fore.rows(), n_members = fore.cols();
  const Matrix h = model.obs_matrix(theta, t);
  const Matrix r = model.obs_noise(theta, t);
  const Matrix q = model.innovation(theta, t);
  const Matrix gain = kalman_gain(summary, h, r);
  const Matrix lq = (q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0)
                        ? psd_cholesky(q, "innovation covariance Q")
                        : Matrix();
  const Matrix lr = psd_cholesky(r, "observation noise R");

  const bool smooth = model.transformation.has_smooth_density();
  Vector lap_mode, lap_sd;
  if (smooth) {
    const Vector mu_y = h * summary.mean;
    const Vector var_y = (h * summary.cov * h.transpose() + r).diagonal();
    const PoissonLaplace lap = poisson_y_mode_and_curvature(z, mu_y, var_y);
    lap_mode = lap.mode;
    lap_sd = (-lap.hessian.array()).inverse().sqrt();
  } else if (!model.transformation.is_identity()) {
    throw ConfigError("particle filter state update needs an identity or smooth layer");
  }

  Matrix out(n, n_members);
  for (Index j = 0; j < n_members; ++j) {
    Rng rng = stream(seed, RngPhase::update, t, particle_index * n_members_global + j,
                     sweep);
    Vector target = z;
    if (smooth) {
      target.resize(lap_mode.size());
      for (Index l = 0; l < lap_mode.size(); ++l)
        target(l) = lap_mode(l) + lap_sd(l) * rng.normal();
    }
    out.col(j) = enkf_member_update(fore.col(j), target, gain, h, lq, lr, rng);
  }
  require_finite(out, "particle member update");
  return out;
}

}  // namespace

ParticleSystem penkf_init(const HssmModel& model, Index n_particles, Index n_members,
                          std::uint64_t seed) {
  ParticleSystem out;
  out.time_index = 0;
  out.particles.resize(n_particles);
  for (Index i = 0; i < n_particles; ++i) {
    Particle& p = out.particles[i];
    Rng trng = stream(seed, RngPhase::init, 0, 1000000 + i);
    p.theta_path = extend_path(nullptr, model.param_init.sample(trng));
    Matrix members(model.state_dim, n_members);
    const Matrix chol = psd_cholesky(model.init_cov, "initial covariance");
    for (Index j = 0; j < n_members; ++j) {
      Rng rng = stream(seed, RngPhase::init, 0, i * n_members + j);
      members.col(j) = model.init_sampler ? model.init_sampler(rng)
                                          : mvn_sample(model.init_mean, chol, rng);
    }
    p.ens = std::make_shared<StateEnsemble>(
        StateEnsemble{std::move(members), 0, EnsembleKind::filtering});
    p.weight = 1.0 / double(n_particles);
  }
  return out;
}

ParticleSystem penkf_step(const HssmModel& model, const ParticleSystem& prev,
                          const Vector& z, int t, const Proposal* proposal,
                          const PenkfOptions& options, StepDiagnostics* diag) {
  const Index m_particles = prev.size();
  if (m_particles < 2) throw ConfigError("particle filter needs at least 2 particles");
  const Index n_members = prev.particles[0].ens->size();

  ParticleSystem next;
  next.time_index = t;
  next.particles.resize(m_particles);
  std::vector<double> log_weights(m_particles);

  for (Index i = 0; i < m_particles; ++i) {
    const Particle& src = prev.particles[i];
    Rng prng = stream(options.seed, RngPhase::proposal, t, i);
    const ParamVector theta = propose_theta(model, proposal, src.theta(), t, prng);

    Matrix fore(model.state_dim, n_members);
    for (Index j = 0; j < n_members; ++j)
      fore.col(j) = model.evolve(src.ens->members.col(j), theta, t);
    require_finite(fore, "evolution map");
    StateEnsemble fore_ens{fore, t, EnsembleKind::forecast};

    const Matrix q = model.innovation(theta, t);
    const GaussianSummary summary = regularized_cov(fore_ens, options.taper, q);
    const Matrix h = model.obs_matrix(theta, t);
    const Matrix r = model.obs_noise(theta, t);
    const Vector mu_y = h * summary.mean;
    const Matrix sigma_y = innovation_matrix(summary, h, r);
    const LogLikEstimate lik = integrated_loglik_from_moments(
        mu_y, sigma_y, z, model.transformation, theta, options.strategy, n_members,
        options.mc_samples, mix_keys(options.seed, t, i));

    log_weights[i] = std::log(std::max(src.weight, 1e-300)) + lik.value +
                     proposal_correction(model, proposal, theta, src.theta(), t);

    Particle& dst = next.particles[i];
    dst.theta_path = extend_path(src.theta_path, theta);
    Matrix updated = update_particle_members(model, fore, z, theta, t, summary,
                                             options.seed, i, n_members, 0);
    dst.ens = std::make_shared<StateEnsemble>(
        StateEnsemble{std::move(updated), t, EnsembleKind::filtering});
    if (options.store_history) {
      dst.state_history = src.state_history;
      dst.state_history.push_back(dst.ens);
    }
  }

  const std::vector<double> weights = normalize_log_weights(log_weights);
  for (Index i = 0; i < m_particles; ++i) next.particles[i].weight = weights[i];

  if (diag != nullptr) {
    diag->time = t;
    diag->ess = next.ess();
    diag->max_raw_log_weight =
        *std::max_element(log_weights.begin(), log_weights.end());
    diag->resampled = false;
  }

  if (next.ess() < options.resample_threshold * double(m_particles)) {
    Rng rrng = stream(options.seed, RngPhase::resample, t, 0);
    const std::vector<Index> picks = resample_indices(next.weights(), options.scheme, rrng);
    ParticleSystem resampled;
    resampled.time_index = t;
    resampled.particles.reserve(m_particles);
    std::vector<Index> sources;
    for (Index pick : picks) {
      Particle p = next.particles[pick];
      p.weight = 1.0 / double(m_particles);
      resampled.particles.push_back(std::move(p));
      sources.push_back(pick);
    }
    if (options.liu_west) {
      // Static-parameter refresh: jitter the current parameter values, then
      // regenerate the affected states from the ancestors' ensembles.
      const Index p_dim = resampled.particles[0].theta().size();
      Matrix thetas(p_dim, m_particles);
      for (Index i = 0; i < m_particles; ++i)
        thetas.col(i) = resampled.particles[i].theta().values();
      Rng frng = stream(options.seed, RngPhase::refresh, t, 0);
      const Matrix refreshed = liu_west_refresh(
          thetas, Vector::Constant(m_particles, 1.0 / double(m_particles)),
          options.liu_west_h, frng);
      for (Index i = 0; i < m_particles; ++i) {
        const Particle& ancestor = prev.particles[sources[i]];
        ParamVector theta = resampled.particles[i].theta();
        theta.values() = refreshed.col(i);
        Matrix fore(model.state_dim, n_members);
        for (Index j = 0; j < n_members; ++j)
          fore.col(j) = model.evolve(ancestor.ens->members.col(j), theta, t);
        require_finite(fore, "evolution map");
        StateEnsemble fore_ens{fore, t, EnsembleKind::forecast};
        const GaussianSummary summary =
            regularized_cov(fore_ens, options.taper, model.innovation(theta, t));
        Matrix updated = update_particle_members(model, fore, z, theta, t, summary,
                                                 options.seed, i, n_members, 1);
        Particle& dst = resampled.particles[i];
        dst.theta_path = extend_path(ancestor.theta_path, theta);
        dst.ens = std::make_shared<StateEnsemble>(
            StateEnsemble{std::move(updated), t, EnsembleKind::filtering});
        if (options.store_history) {
          dst.state_history = ancestor.state_history;
          dst.state_history.push_back(dst.ens);
        }
      }
    }
    if (diag != nullptr) {
      diag->resampled = true;
      diag->unique_particles = resampled.unique_root_ancestors();
    }
    return resampled;
  }
  if (diag != nullptr) diag->unique_particles = next.unique_root_ancestors();
  return next;
}

StateEnsemble filter_update_fixed_theta(const HssmModel& model,
                                        const StateEnsemble& fore, const Vector& z,
                                        const ParamVector& theta,
                                        const TaperSpec& taper, std::uint64_t seed) {
  const int t = fore.time_index;
  const GaussianSummary summary =
      regularized_cov(fore, taper, model.innovation(theta, t));
  Matrix updated = update_particle_members(model, fore.members, z, theta, t, summary,
                                           seed, 0, fore.size(), 0);
  return StateEnsemble{std::move(updated), t, EnsembleKind::filtering};
}

double FiParticleSystem::ess() const {
  double acc = 0.0;
  for (double w : weights) acc += w * w;
  return acc > 0.0 ? 1.0 / acc : 0.0;
}

FiParticleSystem penkf_init_fi(const HssmModel& model, Index n_theta, Index n_members,
                               std::uint64_t seed) {
  FiParticleSystem out;
  out.time_index = 0;
  out.state.members = sample_initial_ensemble(model, n_members, seed);
  out.state.time_index = 0;
  out.state.kind = EnsembleKind::filtering;
  out.theta_paths.resize(n_theta);
  out.weights.assign(n_theta, 1.0 / double(n_theta));
  for (Index i = 0; i < n_theta; ++i) {
    Rng trng = stream(seed, RngPhase::init, 0, 1000000 + i);
    out.theta_paths[i] = extend_path(nullptr, model.param_init.sample(trng));
  }
  return out;
}

FiParticleSystem penkf_step_fi(const HssmModel& model, const FiParticleSystem& prev,
                               const Vector& z, int t, const Proposal* proposal,
                               const PenkfOptions& options, StepDiagnostics* diag) {
  if (!model.forecast_independent)
    throw ConfigError("the shared-ensemble path requires forecast independence");
  const Index n_theta = prev.n_theta();
  const Index n_members = prev.state.size();

  // One forecast for the shared ensemble.
  Matrix fore(model.state_dim, n_members);
  const ParamVector& proto = prev.theta_paths[0]->value;
  for (Index j = 0; j < n_members; ++j)
    fore.col(j) = model.evolve(prev.state.members.col(j), proto, t);
  require_finite(fore, "evolution map");
  StateEnsemble fore_ens{fore, t, EnsembleKind::forecast};
  const GaussianSummary base = regularized_cov(fore_ens, options.taper, Matrix());

  FiParticleSystem next;
  next.time_index = t;
  next.theta_paths.resize(n_theta);
  std::vector<double> log_weights(n_theta);
  std::vector<ParamVector> thetas(n_theta, ParamVector::empty());
  for (Index i = 0; i < n_theta; ++i) {
    Rng prng = stream(options.seed, RngPhase::proposal, t, i);
    const ParamVector& prev_theta = prev.theta_paths[i]->value;
    thetas[i] = propose_theta(model, proposal, prev_theta, t, prng);
    GaussianSummary summary = base;
    const Matrix q = model.innovation(thetas[i], t);
    if (q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0) summary.cov += q;
    const Matrix h = model.obs_matrix(thetas[i], t);
    const Matrix r = model.obs_noise(thetas[i], t);
    const LogLikEstimate lik = integrated_loglik_from_moments(
        h * summary.mean, innovation_matrix(summary, h, r), z, model.transformation,
        thetas[i], options.strategy, n_members, options.mc_samples,
        mix_keys(options.seed, t, i));
    log_weights[i] = std::log(std::max(prev.weights[i], 1e-300)) + lik.value +
                     proposal_correction(model, proposal, thetas[i], prev_theta, t);
    next.theta_paths[i] = extend_path(prev.theta_paths[i], thetas[i]);
  }
  next.weights = normalize_log_weights(log_weights);

  if (diag != nullptr) {
    diag->time = t;
    diag->ess = next.ess();
    diag->max_raw_log_weight =
        *std::max_element(log_weights.begin(), log_weights.end());
    diag->resampled = false;
  }

  // Each state member is updated under a parameter drawn from the filtered
  // parameter law.
  Vector w(n_theta);
  for (Index i = 0; i < n_theta; ++i) w(i) = next.weights[i];
  Rng arng = stream(options.seed, RngPhase::resample, t, 1);
  const std::vector<Index> assign = [&] {
    std::vector<Index> out(n_members);
    for (Index j = 0; j < n_members; ++j) {
      const double u = arng.uniform();
      double acc = 0.0;
      Index pick = n_theta - 1;
      for (Index i = 0; i < n_theta; ++i) {
        acc += w(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
      out[j] = pick;
    }
    return out;
  }();

  next.state.members.resize(model.state_dim, n_members);
  next.state.time_index = t;
  next.state.kind = EnsembleKind::filtering;
  std::unordered_map<Index, Matrix> gain_cache, lr_cache, h_cache;
  for (Index j = 0; j < n_members; ++j) {
    const Index i = assign[j];
    if (!gain_cache.count(i)) {
      GaussianSummary summary = base;
      const Matrix q = model.innovation(thetas[i], t);
      if (q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0) summary.cov += q;
      const Matrix h = model.obs_matrix(thetas[i], t);
      const Matrix r = model.obs_noise(thetas[i], t);
      gain_cache[i] = kalman_gain(summary, h, r);
      lr_cache[i] = psd_cholesky(r, "observation noise R");
      h_cache[i] = h;
    }
    const Matrix q = model.innovation(thetas[i], t);
    const Matrix lq = (q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0)
                          ? psd_cholesky(q, "innovation covariance Q")
                          : Matrix();
    Rng rng = stream(options.seed, RngPhase::update, t, j, 0);
    next.state.members.col(j) = enkf_member_update(fore.col(j), z, gain_cache[i],
                                                   h_cache[i], lq, lr_cache[i], rng);
  }
  require_finite(next.state.members, "fi member update");

  if (next.ess() < options.resample_threshold * double(n_theta)) {
    Rng rrng = stream(options.seed, RngPhase::resample, t, 0);
    const std::vector<Index> picks = resample_indices(w, options.scheme, rrng);
    std::vector<std::shared_ptr<const ThetaPathNode>> paths(n_theta);
    for (Index k = 0; k < n_theta; ++k) paths[k] = next.theta_paths[picks[k]];
    next.theta_paths = std::move(paths);
    next.weights.assign(n_theta, 1.0 / double(n_theta));
    if (diag != nullptr) diag->resampled = true;
  }
  if (diag != nullptr) {
    std::set<const ThetaPathNode*> roots;
    for (const auto& path : next.theta_paths) {
      const ThetaPathNode* node = path.get();
      while (node->parent != nullptr) node = node->parent.get();
      roots.insert(node);
    }
    diag->unique_particles = static_cast<int>(roots.size());
  }
  return next;
}

ParticleSystem earbpf_step(const HssmModel& model, const ParticleSystem& prev,
                           const Vector& z, int t, const Proposal* proposal,
                           const PenkfOptions& options, StepDiagnostics* diag) {
  const Index m_particles = prev.size();
  const Index n_members = prev.particles[0].ens->size();
  const ObsModel& obs = model.transformation;
  const bool smooth = obs.has_smooth_density();
  if (!smooth && !obs.is_identity())
    throw ConfigError("earbpf needs an identity or smooth transformation layer");

  ParticleSystem next;
  next.time_index = t;
  next.particles.resize(m_particles);
  std::vector<double> log_weights(m_particles);
  std::vector<double> member_ess(m_particles);

  for (Index i = 0; i < m_particles; ++i) {
    const Particle& src = prev.particles[i];
    Rng prng = stream(options.seed, RngPhase::proposal, t, i);
    const ParamVector theta = propose_theta(model, proposal, src.theta(), t, prng);
    const Matrix h = model.obs_matrix(theta, t);
    const Matrix r = model.obs_noise(theta, t);
    const Matrix q = model.innovation(theta, t);

    Matrix fore(model.state_dim, n_members);
    for (Index j = 0; j < n_members; ++j)
      fore.col(j) = model.evolve(src.ens->members.col(j), theta, t);
    require_finite(fore, "evolution map");

    // Particle weight: per-member integrated likelihood at the clean
    // forecasts, with Q folded into the latent-observation variance.
    const Matrix mixture_cov = h * q * h.transpose() + r;
    std::vector<double> member_logs(n_members);
    if (obs.is_identity()) {
      StateEnsemble fore_ens{fore, t, EnsembleKind::forecast};
      member_logs.clear();
      Eigen::LLT<Matrix> llt(((mixture_cov + mixture_cov.transpose()) / 2).eval());
      if (llt.info() != Eigen::Success)
        throw SingularMatrixError("mixture covariance H Q H' + R is not positive definite");
      double half_logdet = 0.0;
      for (Index l = 0; l < mixture_cov.rows(); ++l)
        half_logdet += std::log(llt.matrixLLT()(l, l));
      for (Index j = 0; j < n_members; ++j) {
        const Vector w = llt.matrixL().solve(z - h * fore.col(j));
        member_logs.push_back(-0.5 * double(z.size()) * std::log(2.0 * M_PI) -
                              half_logdet - 0.5 * w.squaredNorm());
      }
    } else {
      const Vector var = mixture_cov.diagonal();
      for (Index j = 0; j < n_members; ++j) {
        const Vector mu = h * fore.col(j);
        const PoissonLaplace lap = poisson_y_mode_and_curvature(z, mu, var);
        double acc = 0.0;
        for (Index l = 0; l < z.size(); ++l) {
          const double d = lap.mode(l) - mu(l);
          acc += obs.coord_log_density(z(l), lap.mode(l)) -
                 0.5 * d * d / var(l) - 0.5 * std::log(2.0 * M_PI * var(l)) +
                 0.5 * std::log(2.0 * M_PI) - 0.5 * std::log(-lap.hessian(l));
        }
        member_logs[j] = acc;
      }
    }
    const double lik = logsumexp_sorted(member_logs) - std::log(double(n_members));
    log_weights[i] = std::log(std::max(src.weight, 1e-300)) + lik +
                     proposal_correction(model, proposal, theta, src.theta(), t);

    // State update by importance reweighting of prior members, then a
    // member-level resample.
    const Matrix lq = (q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0)
                          ? psd_cholesky(q, "innovation covariance Q")
                          : Matrix();
    Matrix priors(model.state_dim, n_members);
    std::vector<double> prior_logs(n_members);
    const Vector r_diag = r.diagonal();
    for (Index j = 0; j < n_members; ++j) {
      Rng rng = stream(options.seed, RngPhase::update, t, i * n_members + j, 0);
      Vector prior = fore.col(j);
      if (lq.size() != 0) {
        Vector wv(model.state_dim);
        for (Index k = 0; k < wv.size(); ++k) wv(k) = rng.normal();
        prior += lq * wv;
      }
      priors.col(j) = prior;
      const Vector mu = h * prior;
      if (obs.is_identity()) {
        double acc = 0.0;
        for (Index l = 0; l < z.size(); ++l) {
          const double d = z(l) - mu(l);
          acc += -0.5 * d * d / r_diag(l) - 0.5 * std::log(2.0 * M_PI * r_diag(l));
        }
        prior_logs[j] = acc;
      } else {
        const PoissonLaplace lap = poisson_y_mode_and_curvature(z, mu, r_diag);
        double acc = 0.0;
        for (Index l = 0; l < z.size(); ++l) {
          const double d = lap.mode(l) - mu(l);
          acc += obs.coord_log_density(z(l), lap.mode(l)) -
                 0.5 * d * d / r_diag(l) - 0.5 * std::log(2.0 * M_PI * r_diag(l)) +
                 0.5 * std::log(2.0 * M_PI) - 0.5 * std::log(-lap.hessian(l));
        }
        prior_logs[j] = acc;
      }
    }
    const std::vector<double> member_weights = normalize_log_weights(prior_logs);
    double sumsq = 0.0;
    for (double wj : member_weights) sumsq += wj * wj;
    member_ess[i] = sumsq > 0.0 ? 1.0 / sumsq : 0.0;

    Vector wvec(n_members);
    for (Index j = 0; j < n_members; ++j) wvec(j) = member_weights[j];
    Rng mrng = stream(options.seed, RngPhase::resample, t, 1000000 + i);
    const std::vector<Index> picks =
        resample_indices(wvec, ResampleScheme::multinomial, mrng);
    Matrix updated(model.state_dim, n_members);
    for (Index j = 0; j < n_members; ++j) updated.col(j) = priors.col(picks[j]);

    Particle& dst = next.particles[i];
    dst.theta_path = extend_path(src.theta_path, theta);
    dst.ens = std::make_shared<StateEnsemble>(
        StateEnsemble{std::move(updated), t, EnsembleKind::filtering});
    if (options.store_history) {
      dst.state_history = src.state_history;
      dst.state_history.push_back(dst.ens);
    }
  }

  const std::vector<double> weights = normalize_log_weights(log_weights);
  for (Index i = 0; i < m_particles; ++i) next.particles[i].weight = weights[i];

  if (diag != nullptr) {
    diag->time = t;
    diag->ess = next.ess();
    diag->max_raw_log_weight =
        *std::max_element(log_weights.begin(), log_weights.end());
    std::vector<double> sorted = member_ess;
    std::sort(sorted.begin(), sorted.end());
    diag->member_ess = sorted[sorted.size() / 2];
    diag->resampled = false;
  }

  if (next.ess() < options.resample_threshold * double(m_particles)) {
    Rng rrng = stream(options.seed, RngPhase::resample, t, 0);
    ParticleSystem resampled = resample(next, options.scheme, rrng);
    if (diag != nullptr) {
      diag->resampled = true;
      diag->unique_particles = resampled.unique_root_ancestors();
    }
    return resampled;
  }
  if (diag != nullptr) diag->unique_particles = next.unique_root_ancestors();
  return next;
}

}  // namespace henkf
