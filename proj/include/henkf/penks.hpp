// Particle smoother for low-dimensional time-varying parameters: the
// particle filter with trajectory storage, optionally followed by a
// fixed-parameter redraw of the state trajectories.
#pragma once

#include "henkf/genks.hpp"
#include "henkf/penkf.hpp"

namespace henkf {

struct PenksOptions {
  Index n_particles = 100;
  Index n_members = 30;
  PenkfOptions step;
  // Redraw state trajectories of surviving particles by a fixed-parameter
  // smoother pass (identity transformation layers only).
  bool redraw_trajectories = false;
  double redraw_weight_floor = 1e-6;
  GenksOptions redraw_options;
};

struct PenksResult {
  ParticleSystem system;  // final weights and stored trajectories
  std::vector<StepDiagnostics> diagnostics;
  // Per-particle smoothed state trajectories after the optional redraw
  // (slices over t, each an N-member ensemble); empty when not redrawn.
  std::vector<std::vector<StateEnsemble>> redrawn;
};

PenksResult penks_run(const HssmModel& model, const std::vector<Vector>& z_seq,
                      const Proposal* proposal, const PenksOptions& options);

}  // namespace henkf
