#include "henkf/mhenks.hpp"

#include <cmath>
#include <iostream>

namespace henkf {

MhenksResult mhenks_run(const HssmModel& model, const std::vector<Vector>& z_seq,
                        const MhenksOptions& options) {
  if (!options.log_prior) throw ConfigError("mhenks needs a parameter prior");
  if (!model.param_transition.is_static &&
      model.param_transition.sample)
    throw ConfigError("mhenks targets static parameters");
  const int horizon = static_cast<int>(z_seq.size());

  ParamVector theta;
  if (options.theta_init) {
    theta = *options.theta_init;
  } else {
    Rng rng = stream(options.seed, RngPhase::init, 0, 31337);
    theta = model.param_init.sample(rng);
  }

  auto loglik = [&](const ParamVector& th, std::uint64_t eval_seed) {
    const std::vector<ParamVector> seq(horizon, th);
    return filtering_loglik(model, z_seq, seq, options.n_members, options.taper,
                            options.strategy, eval_seed) +
           options.loglik_offset_per_step * horizon;
  };

  MhenksResult out;
  out.chain.reserve(options.iterations);
  int accepted = 0;
  for (int it = 1; it <= options.iterations; ++it) {
    Rng prop_rng = stream(options.seed, RngPhase::proposal, it);
    ParamVector proposal = theta;
    for (Index c = 0; c < proposal.size(); ++c)
      proposal[c] += options.proposal_sd * prop_rng.normal();

    const double lp_prop = options.log_prior(proposal);
    if (lp_prop > -std::numeric_limits<double>::infinity()) {
      // Fresh ensembles for both values under one per-iteration seed.
      const std::uint64_t eval_seed = mix_keys(options.seed, 0x6d68ULL, it);
      const double log_alpha = (loglik(proposal, eval_seed) + lp_prop) -
                               (loglik(theta, eval_seed) + options.log_prior(theta));
      if (!std::isfinite(log_alpha)) {
        ++out.nonfinite_ratios;
        std::cerr << "mhenks: non-finite acceptance ratio at iteration " << it
                  << ", rejecting\n";
      } else {
        Rng u_rng = stream(options.seed, RngPhase::mcmc, it);
        if (std::log(std::max(u_rng.uniform(), 1e-300)) < log_alpha) {
          theta = proposal;
          ++accepted;
        }
      }
    }
    out.chain.push_back(theta);
  }
  out.acceptance_rate = double(accepted) / options.iterations;

  if (options.state_draw_thin > 0) {
    for (int it = options.burn_in; it < options.iterations;
         it += options.state_draw_thin) {
      const std::vector<ParamVector> seq(horizon, out.chain[it]);
      GenksOptions opt = options.state_draw_options;
      opt.n_members = opt.n_members > 0 ? opt.n_members : options.n_members;
      opt.seed = mix_keys(options.seed, 0x7374ULL, it);
      const SmootherDraws draws = fixed_theta_state_draws(model, z_seq, seq, 1, opt);
      out.state_draws.push_back(draws.draws.front());
    }
  }
  return out;
}

}  // namespace henkf
