// Particle Gibbs baseline: conditional sequential Monte Carlo retaining the
// reference trajectory, alternated with the closed-form parameter draw.
#pragma once

#include "henkf/genks.hpp"

namespace henkf {

struct ParticleGibbsOptions {
  Index n_particles = 50;
  int iterations = 100;
  int burn_in = 20;
  std::uint64_t seed = 1;
  std::optional<ParamVector> theta_init;
  DrawSink sink;
};

struct ParticleGibbsResult {
  SmootherDraws draws;
  // Distinct time-1 ancestors of the surviving lineages, per iteration.
  std::vector<int> unique_first_ancestors;
};

// Bootstrap-proposal conditional particle filter with multinomial
// resampling; requires an identity transformation layer and a closed-form
// smoothing conditional for the parameters.
ParticleGibbsResult particle_gibbs_run(const HssmModel& model,
                                       const std::vector<Vector>& z_seq,
                                       const ParticleGibbsOptions& options);

}  // namespace henkf
