// Gibbs ensemble Kalman smoother and the block-composed MCMC variant: at
// each iteration an EnKS run conditional on the current latent observations
// and parameters supplies one state trajectory, followed by latent and
// parameter conditional draws.
#pragma once

#include <functional>

#include "henkf/likelihood.hpp"
#include "henkf/smoother.hpp"

namespace henkf {

struct SmootherDraw {
  std::vector<Vector> x;            // x_{1:T}
  std::vector<Vector> y;            // y_{1:T} (equals z for identity layers)
  std::vector<ParamVector> theta;   // theta_{1:T}
  double log_post_proxy = 0.0;      // filtering loglik proxy of the kept draw
};

struct SmootherDraws {
  std::vector<SmootherDraw> draws;  // one per iteration, in order
  int burn_in = 0;

  // Post-burn-in samples of one theta component at one time index.
  std::vector<double> theta_samples(Index component, int t = 0) const;
};

// Streaming sink for kept draws (bounds memory on long runs).
using DrawSink = std::function<void(const SmootherDraw&, int iteration)>;

struct McmcBlock {
  enum class Kind { gibbs_fcd, mh };
  Kind kind = Kind::gibbs_fcd;
  std::vector<Index> components;  // theta components owned by this block
  // gibbs_fcd: sampler for the block given trajectories; when null and the
  // block covers every component, model.theta_fcd_smoother is used.
  std::function<std::vector<ParamVector>(
      const std::vector<Vector>& z, const std::vector<Vector>& y,
      const std::vector<Vector>& x, const std::vector<ParamVector>& current, Rng&)>
      fcd;
  // mh: random walk on a static component, accepted through the product of
  // integrated filtering likelihoods under the proposed parameters.
  double proposal_sd = 0.1;
  std::function<double(double)> log_prior;  // component prior for mh blocks
};

struct GenksOptions {
  Index n_members = 50;
  int iterations = 100;
  int burn_in = 20;
  int lag = 3;
  TaperSpec taper_space = TaperSpec::identity_taper();
  double lag_taper_radius = 0.0;  // 0: radius = lag; negative: no lag taper
  IntegrationStrategy strategy = IntegrationStrategy::degenerate;
  std::uint64_t seed = 1;
  DrawSink sink;
  // Initial parameter trajectory; defaults to a param_init draw replicated.
  std::optional<ParamVector> theta_init;
  // Full initial trajectory (time-varying fixed parameters).
  std::optional<std::vector<ParamVector>> theta_seq_init;
};

// Seed of the EnKS pass embedded in one iteration (exposed so tests can
// reproduce an iteration's inner run).
std::uint64_t genks_iteration_seed(std::uint64_t seed, int iteration);

SmootherDraws mcmc_enks_compose(const HssmModel& model,
                                const std::vector<Vector>& z_seq,
                                const std::vector<McmcBlock>& blocks,
                                const GenksOptions& options);

// Single full-theta Gibbs block (the plain GEnKS).
SmootherDraws genks_run(const HssmModel& model, const std::vector<Vector>& z_seq,
                        const GenksOptions& options);

// Fixed-theta special case (no parameter block): state (and latent) draws
// only, e.g. for the thinned state pass of the Metropolis smoother.
SmootherDraws fixed_theta_state_draws(const HssmModel& model,
                                      const std::vector<Vector>& z_seq,
                                      const std::vector<ParamVector>& theta_seq,
                                      int n_draws, const GenksOptions& options);

// Sum over t of integrated likelihoods along one EnKF pass under theta_seq
// (the product-form filtering likelihood of the data).
double filtering_loglik(const HssmModel& model, const std::vector<Vector>& z_seq,
                        const std::vector<ParamVector>& theta_seq, Index n_members,
                        const TaperSpec& taper, IntegrationStrategy strategy,
                        std::uint64_t seed);

}  // namespace henkf
