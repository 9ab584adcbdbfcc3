#pragma once

#include <limits>

namespace henkf {

// Per-step record emitted by the sequential algorithms; runners append these
// to the run's JSON-lines log.
struct StepDiagnostics {
  int time = 0;
  double ess = 0.0;
  int unique_particles = 0;
  bool resampled = false;
  double max_raw_log_weight = -std::numeric_limits<double>::infinity();
  // Median across particles of the member-weight ESS (EARBPF only).
  double member_ess = std::numeric_limits<double>::quiet_NaN();
  double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace henkf
