#include "henkf/genks.hpp"

#include <cmath>
#include <set>

#include "henkf/penkf.hpp"
#include "henkf/stats.hpp"

namespace henkf {

std::vector<double> SmootherDraws::theta_samples(Index component, int t) const {
  std::vector<double> out;
  for (std::size_t it = burn_in; it < draws.size(); ++it)
    out.push_back(draws[it].theta[t][component]);
  return out;
}

std::uint64_t genks_iteration_seed(std::uint64_t seed, int iteration) {
  return mix_keys(seed, 0x67656e6b73ULL, static_cast<std::uint64_t>(iteration));
}

double filtering_loglik(const HssmModel& model, const std::vector<Vector>& z_seq,
                        const std::vector<ParamVector>& theta_seq, Index n_members,
                        const TaperSpec& taper, IntegrationStrategy strategy,
                        std::uint64_t seed) {
  if (theta_seq.size() != z_seq.size())
    throw DimensionError("one theta per observation required");
  StateEnsemble ens{sample_initial_ensemble(model, n_members, seed), 0,
                    EnsembleKind::filtering};
  double total = 0.0;
  for (int t = 1; t <= static_cast<int>(z_seq.size()); ++t) {
    const ParamVector& theta = theta_seq[t - 1];
    const StateEnsemble fore = enkf_forecast(model, ens, theta);
    total += integrated_loglik(fore, z_seq[t - 1], model, theta, taper, strategy, 256,
                               mix_keys(seed, 0x6c696bULL, t))
                 .value;
    ens = filter_update_fixed_theta(model, fore, z_seq[t - 1], theta, taper, seed);
  }
  return total;
}

namespace {

void check_partition(const std::vector<McmcBlock>& blocks, Index theta_dim) {
  std::set<Index> seen;
  for (const McmcBlock& block : blocks) {
    for (Index c : block.components) {
      if (c < 0 || c >= theta_dim)
        throw ConfigError("mcmc block component out of range");
      if (!seen.insert(c).second)
        throw ConfigError("mcmc blocks overlap on a parameter component");
    }
  }
}

}  // namespace

SmootherDraws mcmc_enks_compose(const HssmModel& model,
                                const std::vector<Vector>& z_seq,
                                const std::vector<McmcBlock>& blocks,
                                const GenksOptions& options) {
  const int horizon = static_cast<int>(z_seq.size());
  const ObsModel& obs = model.transformation;

  // Initial parameter trajectory.
  ParamVector theta0;
  if (options.theta_seq_init) {
    theta0 = options.theta_seq_init->at(0);
  } else if (options.theta_init) {
    theta0 = *options.theta_init;
  } else if (model.param_init.sample) {
    Rng rng = stream(options.seed, RngPhase::init, 0, 424242);
    theta0 = model.param_init.sample(rng);
  }
  check_partition(blocks, theta0.size());
  for (const McmcBlock& block : blocks) {
    if (block.kind == McmcBlock::Kind::gibbs_fcd && !block.fcd &&
        !(model.theta_fcd_smoother &&
          static_cast<Index>(block.components.size()) == theta0.size()))
      throw ConfigError("gibbs block without a full-conditional sampler");
  }
  std::vector<ParamVector> theta_seq = options.theta_seq_init
                                           ? *options.theta_seq_init
                                           : std::vector<ParamVector>(horizon, theta0);
  if (static_cast<int>(theta_seq.size()) != horizon)
    throw DimensionError("initial parameter trajectory has the wrong length");

  // Initial latent observations.
  std::vector<Vector> y_seq = z_seq;
  if (!obs.is_identity() &&
      obs.family != ObsModel::Family::scale_mixture_t) {
    for (int t = 1; t <= horizon; ++t) {
      Rng rng = stream(options.seed, RngPhase::obs_fcd, 0, t);
      y_seq[t - 1] = sample_y_fcd(
          z_seq[t - 1], model.obs_matrix(theta_seq[t - 1], t) * model.init_mean, obs,
          theta_seq[t - 1], rng);
    }
  }

  SmootherDraws out;
  out.burn_in = options.burn_in;
  for (int it = 1; it <= options.iterations; ++it) {
    // (a) EnKS pass and a uniformly chosen member trajectory.
    EnksOptions enks_opt;
    enks_opt.n_members = options.n_members;
    enks_opt.lag = options.lag;
    enks_opt.taper_space = options.taper_space;
    enks_opt.lag_taper_radius = options.lag_taper_radius;
    enks_opt.seed = genks_iteration_seed(options.seed, it);
    const EnksResult enks = enks_run(model, y_seq, theta_seq, enks_opt);
    Rng pick_rng = stream(options.seed, RngPhase::resample, it);
    const Index member = static_cast<Index>(pick_rng.uniform_index(options.n_members));
    std::vector<Vector> x_traj = member_trajectory(enks, member);

    // (b) latent observations.
    if (!obs.is_identity() && obs.family != ObsModel::Family::scale_mixture_t) {
      for (int t = 1; t <= horizon; ++t) {
        Rng rng = stream(options.seed, RngPhase::obs_fcd, it, t);
        const Vector hx = model.obs_matrix(theta_seq[t - 1], t) * x_traj[t - 1];
        const Vector current = y_seq[t - 1];
        y_seq[t - 1] = sample_y_fcd(z_seq[t - 1], hx, obs, theta_seq[t - 1], rng,
                                    &current);
      }
    }

    // (c) parameter blocks.
    double proxy = 0.0;
    int block_index = 0;
    for (const McmcBlock& block : blocks) {
      ++block_index;
      if (block.kind == McmcBlock::Kind::gibbs_fcd) {
        Rng rng = stream(options.seed, RngPhase::theta_fcd, it, block_index);
        const std::vector<ParamVector> sampled =
            block.fcd ? block.fcd(z_seq, y_seq, x_traj, theta_seq, rng)
                      : model.theta_fcd_smoother(z_seq, y_seq, x_traj, rng);
        if (sampled.size() != theta_seq.size())
          throw DimensionError("parameter sampler returned a wrong-length trajectory");
        for (int t = 0; t < horizon; ++t)
          for (Index c : block.components) theta_seq[t][c] = sampled[t][c];
      } else {
        // Static random-walk move on each owned component, accepted through
        // the product of integrated filtering likelihoods (common random
        // numbers across the two evaluations).
        for (Index c : block.components) {
          Rng prop_rng = stream(options.seed, RngPhase::proposal, it, block_index, c);
          const double step = block.proposal_sd * prop_rng.normal();
          std::vector<ParamVector> proposed = theta_seq;
          for (int t = 0; t < horizon; ++t) proposed[t][c] += step;
          const double lp_cur =
              block.log_prior ? block.log_prior(theta_seq[0][c]) : 0.0;
          const double lp_prop =
              block.log_prior ? block.log_prior(proposed[0][c]) : 0.0;
          if (lp_prop == -std::numeric_limits<double>::infinity()) continue;
          const std::uint64_t eval_seed = mix_keys(options.seed, it, block_index, c);
          const double ll_cur =
              filtering_loglik(model, z_seq, theta_seq, options.n_members,
                               options.taper_space, options.strategy, eval_seed);
          const double ll_prop =
              filtering_loglik(model, z_seq, proposed, options.n_members,
                               options.taper_space, options.strategy, eval_seed);
          const double log_alpha = ll_prop + lp_prop - ll_cur - lp_cur;
          proxy = ll_cur;
          if (std::isfinite(log_alpha) &&
              std::log(std::max(prop_rng.uniform(), 1e-300)) < log_alpha) {
            theta_seq = std::move(proposed);
            proxy = ll_prop;
          }
        }
      }
    }

    SmootherDraw draw;
    draw.x = std::move(x_traj);
    draw.y = y_seq;
    draw.theta = theta_seq;
    draw.log_post_proxy = proxy;
    if (options.sink) options.sink(draw, it);
    out.draws.push_back(std::move(draw));
  }
  return out;
}

SmootherDraws genks_run(const HssmModel& model, const std::vector<Vector>& z_seq,
                        const GenksOptions& options) {
  ParamVector theta0;
  if (options.theta_init) {
    theta0 = *options.theta_init;
  } else if (model.param_init.sample) {
    Rng rng = stream(options.seed, RngPhase::init, 0, 424242);
    theta0 = model.param_init.sample(rng);
  }
  std::vector<McmcBlock> blocks;
  if (theta0.size() > 0) {
    if (!model.theta_fcd_smoother)
      throw ConfigError("genks needs a full-conditional parameter sampler");
    McmcBlock block;
    block.kind = McmcBlock::Kind::gibbs_fcd;
    for (Index c = 0; c < theta0.size(); ++c) block.components.push_back(c);
    blocks.push_back(std::move(block));
  }
  return mcmc_enks_compose(model, z_seq, blocks, options);
}

SmootherDraws fixed_theta_state_draws(const HssmModel& model,
                                      const std::vector<Vector>& z_seq,
                                      const std::vector<ParamVector>& theta_seq,
                                      int n_draws, const GenksOptions& options) {
  GenksOptions opt = options;
  opt.iterations = n_draws;
  opt.burn_in = 0;
  opt.theta_seq_init = theta_seq;
  return mcmc_enks_compose(model, z_seq, {}, opt);
}

}  // namespace henkf
