// Forward ensemble Kalman smoother with lag truncation.
#pragma once

#include <deque>
#include <vector>

#include "henkf/filter.hpp"

namespace henkf {

// The lag window at a time step: slices x_{l|t} for l = max(1, t-k+1) .. t.
struct SmoothingTrajectory {
  int time = 0;
  int lag_window = 0;
  std::vector<StateEnsemble> slices;
};

struct EnksOptions {
  Index n_members = 100;
  int lag = 1;  // k: slices older than k lags are frozen
  TaperSpec taper_space = TaperSpec::identity_taper();
  // Wendland-in-lag taper radius for cross-covariances; 0 uses `lag`,
  // negative disables lag tapering inside the window.
  double lag_taper_radius = 0.0;
  std::uint64_t seed = 1;
  // Start from this filtering ensemble instead of sampling the initial law.
  std::optional<Matrix> initial_members;
};

struct EnksResult {
  // Final smoothed marginal for each time 1..T: x_{t | min(t+k-1, T)}.
  std::vector<StateEnsemble> smoothed;
  // Window content at t = T (the joint tail sample).
  SmoothingTrajectory final_window;
  // Peak number of scalars retained in the working window.
  long max_window_scalars = 0;
};

// Forward pass over y_{1:T} with known per-time parameters. At each time the
// forecast members receive fresh innovation noise, the current-time gain uses
// the tapered clean-forecast covariance plus Q, and lagged slices are shifted
// through space-and-lag-tapered cross-covariances sharing the time-t
// pseudo-observations.
EnksResult enks_run(const HssmModel& model, const std::vector<Vector>& y_seq,
                    const std::vector<ParamVector>& theta_seq,
                    const EnksOptions& options);

// Column j of every smoothed slice: one joint trajectory sample.
std::vector<Vector> member_trajectory(const EnksResult& result, Index j);

}  // namespace henkf
