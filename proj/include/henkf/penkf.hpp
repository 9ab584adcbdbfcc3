// Particle ensemble Kalman filter: a particle filter over parameters whose
// per-particle state inference runs through EnKF updates, plus the
// exact-approximate Rao-Blackwellized baseline.
#pragma once

#include "henkf/diagnostics.hpp"
#include "henkf/likelihood.hpp"
#include "henkf/model.hpp"
#include "henkf/particle.hpp"

namespace henkf {

struct Proposal {
  std::function<ParamVector(const ParamVector& prev, int t, Rng&)> sample;
  std::function<double(const ParamVector& cur, const ParamVector& prev, int t)>
      log_density;
};

struct PenkfOptions {
  TaperSpec taper = TaperSpec::identity_taper();
  IntegrationStrategy strategy = IntegrationStrategy::laplace;
  ResampleScheme scheme = ResampleScheme::systematic;
  double resample_threshold = 0.5;  // resample when ESS < threshold * M
  bool store_history = false;       // keep filtered trajectories (smoother use)
  bool liu_west = false;            // static-parameter refresh after resampling
  double liu_west_h = 0.1;
  int mc_samples = 256;
  std::uint64_t seed = 1;
};

// Equally weighted initial system: M parameter draws from p_0, each with its
// own N-member state ensemble.
ParticleSystem penkf_init(const HssmModel& model, Index n_particles, Index n_members,
                          std::uint64_t seed);

// One assimilation step: propose theta, propagate the particle's ensemble,
// weight by the integrated likelihood times p_t/q_t, update the members
// (Laplace latent draw then EnKF shift for non-Gaussian data), normalize,
// and resample when the ESS drops. A null proposal uses p_t, cancelling in
// the weight.
ParticleSystem penkf_step(const HssmModel& model, const ParticleSystem& prev,
                          const Vector& z, int t, const Proposal* proposal,
                          const PenkfOptions& options,
                          StepDiagnostics* diag = nullptr);

// Forecast-independent fast path: one shared state ensemble for all theta
// particles, supporting parameter oversampling (more theta particles than
// state members).
struct FiParticleSystem {
  StateEnsemble state;  // shared members
  std::vector<std::shared_ptr<const ThetaPathNode>> theta_paths;
  std::vector<double> weights;
  int time_index = 0;

  Index n_theta() const { return static_cast<Index>(theta_paths.size()); }
  double ess() const;
};

FiParticleSystem penkf_init_fi(const HssmModel& model, Index n_theta, Index n_members,
                               std::uint64_t seed);

FiParticleSystem penkf_step_fi(const HssmModel& model, const FiParticleSystem& prev,
                               const Vector& z, int t, const Proposal* proposal,
                               const PenkfOptions& options,
                               StepDiagnostics* diag = nullptr);

// Filtered ensemble from a forecast under a fixed theta: the plain update
// for identity layers, the single-sweep Laplace-then-shift draw for smooth
// layers.
StateEnsemble filter_update_fixed_theta(const HssmModel& model,
                                        const StateEnsemble& fore, const Vector& z,
                                        const ParamVector& theta,
                                        const TaperSpec& taper, std::uint64_t seed);

// Exact-approximate Rao-Blackwellized baseline: the particle likelihood
// (extended through the transformation layer by per-member Laplace plug-in)
// replaces the integrated EnKF likelihood, and members are importance-
// reweighted and resampled instead of shifted.
ParticleSystem earbpf_step(const HssmModel& model, const ParticleSystem& prev,
                           const Vector& z, int t, const Proposal* proposal,
                           const PenkfOptions& options,
                           StepDiagnostics* diag = nullptr);

}  // namespace henkf
