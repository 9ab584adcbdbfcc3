#include "henkf/particle_gibbs.hpp"

#include <cmath>
#include <set>

#include "henkf/particle.hpp"
#include "henkf/stats.hpp"

namespace henkf {

ParticleGibbsResult particle_gibbs_run(const HssmModel& model,
                                       const std::vector<Vector>& z_seq,
                                       const ParticleGibbsOptions& options) {
  if (!model.transformation.is_identity())
    throw ConfigError("particle gibbs requires an identity transformation layer");
  if (!model.theta_fcd_smoother)
    throw ConfigError("particle gibbs needs a closed-form parameter conditional");
  const int horizon = static_cast<int>(z_seq.size());
  const Index n = model.state_dim;
  const Index n_particles = options.n_particles;

  ParamVector theta;
  if (options.theta_init) {
    theta = *options.theta_init;
  } else {
    Rng rng = stream(options.seed, RngPhase::init, 0, 5150);
    theta = model.param_init.sample(rng);
  }

  // Initial reference trajectory: a prior draw.
  std::vector<Vector> reference(horizon);
  {
    Rng rng = stream(options.seed, RngPhase::init, 0, 6160);
    Vector x = model.init_sampler
                   ? model.init_sampler(rng)
                   : mvn_sample(model.init_mean,
                                psd_cholesky(model.init_cov, "initial covariance"), rng);
    for (int t = 1; t <= horizon; ++t) {
      x = model.evolve(x, theta, t);
      const Matrix q = model.innovation(theta, t);
      if (q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0)
        x = mvn_sample(x, psd_cholesky(q, "innovation covariance Q"), rng);
      reference[t - 1] = x;
    }
  }

  ParticleGibbsResult out;
  out.draws.burn_in = options.burn_in;
  for (int it = 1; it <= options.iterations; ++it) {
    // Conditional SMC sweep retaining the reference as particle 0.
    std::vector<Matrix> states(horizon, Matrix(n, n_particles));
    std::vector<std::vector<Index>> ancestry(horizon,
                                             std::vector<Index>(n_particles, 0));
    Vector log_w(n_particles);
    Vector weights(n_particles);

    const Matrix init_chol = psd_cholesky(model.init_cov, "initial covariance");
    for (int t = 1; t <= horizon; ++t) {
      const Matrix h = model.obs_matrix(theta, t);
      const Matrix r = model.obs_noise(theta, t);
      const Matrix q = model.innovation(theta, t);
      const bool has_q = q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0;
      const Matrix lq = has_q ? psd_cholesky(q, "innovation covariance Q") : Matrix();

      if (t == 1) {
        for (Index j = 1; j < n_particles; ++j) {
          Rng rng = stream(options.seed, RngPhase::forecast, it, j);
          Vector x = model.init_sampler ? model.init_sampler(rng)
                                        : mvn_sample(model.init_mean, init_chol, rng);
          x = model.evolve(x, theta, 1);
          if (has_q) x = mvn_sample(x, lq, rng);
          states[0].col(j) = x;
        }
      } else {
        Rng arng = stream(options.seed, RngPhase::resample, it, t);
        const std::vector<Index> picks =
            resample_indices(weights, ResampleScheme::multinomial, arng);
        ancestry[t - 1][0] = 0;  // the reference keeps its own lineage
        for (Index j = 1; j < n_particles; ++j) ancestry[t - 1][j] = picks[j];
        for (Index j = 1; j < n_particles; ++j) {
          Rng rng = stream(options.seed, RngPhase::forecast, it, (t << 20) + j);
          Vector x = model.evolve(states[t - 2].col(ancestry[t - 1][j]), theta, t);
          if (has_q) x = mvn_sample(x, lq, rng);
          states[t - 1].col(j) = x;
        }
      }
      states[t - 1].col(0) = reference[t - 1];
      if ((states[t - 1].col(0) - reference[t - 1]).cwiseAbs().maxCoeff() != 0.0)
        throw NumericalError("conditional SMC lost the reference trajectory");

      for (Index j = 0; j < n_particles; ++j)
        log_w(j) = log_mvn_density(z_seq[t - 1], h * states[t - 1].col(j), r,
                                   "observation noise R");
      const double top = log_w.maxCoeff();
      weights = (log_w.array() - top).exp();
      weights /= weights.sum();
    }

    // Draw the new trajectory and trace its ancestry.
    Rng krng = stream(options.seed, RngPhase::mcmc, it);
    const double u = krng.uniform();
    Index pick = n_particles - 1;
    double acc = 0.0;
    for (Index j = 0; j < n_particles; ++j) {
      acc += weights(j);
      if (u < acc) {
        pick = j;
        break;
      }
    }
    std::vector<Vector> trajectory(horizon);
    Index idx = pick;
    for (int t = horizon; t >= 1; --t) {
      trajectory[t - 1] = states[t - 1].col(idx);
      idx = ancestry[t - 1][idx];
    }
    reference = trajectory;

    // Collapse diagnostic: distinct time-1 ancestors over surviving lineages.
    std::set<Index> roots;
    for (Index j = 0; j < n_particles; ++j) {
      Index a = j;
      for (int t = horizon; t >= 2; --t) a = ancestry[t - 1][a];
      roots.insert(a);
    }
    out.unique_first_ancestors.push_back(static_cast<int>(roots.size()));

    // Parameter draw from its smoothing conditional.
    Rng trng = stream(options.seed, RngPhase::theta_fcd, it);
    const std::vector<ParamVector> sampled =
        model.theta_fcd_smoother(z_seq, z_seq, trajectory, trng);
    theta = sampled.at(0);

    SmootherDraw draw;
    draw.x = trajectory;
    draw.y = z_seq;
    draw.theta = sampled;
    if (options.sink) options.sink(draw, it);
    out.draws.draws.push_back(std::move(draw));
  }
  return out;
}

}  // namespace henkf
