// Gibbs ensemble Kalman filter: per-chain sweeps of EnKF shift, latent-
// observation draw, and parameter draw, over one shared forecast ensemble.
#pragma once

#include <optional>

#include "henkf/filter.hpp"

namespace henkf {

struct GenkfOptions {
  int sweeps = 3;  // fixed sweep count G
  TaperSpec taper = TaperSpec::identity_taper();
  std::uint64_t seed = 1;
  // Random-walk sd on log kappa for the rainfall family with unknown power.
  double kappa_proposal_sd = 0.1;
};

struct GenkfState {
  Matrix x;                        // n x M filtering members
  Matrix y;                        // m x M latent observations
  std::vector<ParamVector> theta;  // per chain
  // Max absolute change of the chain-averaged theta over the last sweep.
  double theta_drift = 0.0;
};

// One time step: forecast all chains together (forecast independence), then
// G sweeps of (x | y, theta), (y | x, theta, z), (theta | x, y, z) per chain.
// `prev_y` carries starting values from the previous step; when absent the
// latent observations are initialized from their conditional given the
// forecast members.
GenkfState genkf_step(const HssmModel& model, const Matrix& prev_x,
                      const std::vector<ParamVector>& prev_theta,
                      const std::optional<Matrix>& prev_y, const Vector& z, int t,
                      const GenkfOptions& options);

}  // namespace henkf
