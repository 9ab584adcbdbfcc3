#include "henkf/penks.hpp"

#include <iostream>

namespace henkf {

PenksResult penks_run(const HssmModel& model, const std::vector<Vector>& z_seq,
                      const Proposal* proposal, const PenksOptions& options) {
  const int horizon = static_cast<int>(z_seq.size());
  if (horizon > 50)
    std::cerr << "penks: T = " << horizon
              << " is large; trajectory weights degenerate at early times\n";

  PenkfOptions step = options.step;
  step.store_history = true;

  PenksResult out;
  ParticleSystem system =
      penkf_init(model, options.n_particles, options.n_members, step.seed);
  for (int t = 1; t <= horizon; ++t) {
    StepDiagnostics diag;
    system = penkf_step(model, system, z_seq[t - 1], t, proposal, step, &diag);
    out.diagnostics.push_back(diag);
  }

  if (options.redraw_trajectories) {
    if (!model.transformation.is_identity())
      throw ConfigError(
          "trajectory redraw is implemented for identity transformation layers");
    out.redrawn.resize(system.particles.size());
    for (Index i = 0; i < system.size(); ++i) {
      const Particle& p = system.particles[i];
      if (p.weight <= options.redraw_weight_floor) continue;
      EnksOptions enks_opt;
      enks_opt.n_members = options.n_members;
      enks_opt.lag = options.redraw_options.lag > 0 ? options.redraw_options.lag
                                                    : horizon;
      enks_opt.taper_space = options.redraw_options.taper_space;
      enks_opt.lag_taper_radius = options.redraw_options.lag_taper_radius;
      enks_opt.seed = mix_keys(step.seed, 0x7264ULL, i);
      const EnksResult enks =
          enks_run(model, z_seq, path_values(p.theta_path), enks_opt);
      out.redrawn[i] = enks.smoothed;
    }
  }
  out.system = std::move(system);
  return out;
}

}  // namespace henkf
