// Lorenz-96 advection model on a latitude circle.
#pragma once

#include <cstdint>

#include "henkf/types.hpp"

namespace henkf {

// Forward-Euler integration of
//   dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F
// over total time `delta`, split into `substeps` Euler steps, cyclic indices.
Vector lorenz96_step(const Vector& x, double forcing, double delta, int substeps);

// Sample covariance of a long free run after burn-in (the model climatology).
Matrix lorenz_climatology(Index n, double forcing, double delta, int substeps,
                          int burn_in_steps, int sample_steps, std::uint64_t seed);

}  // namespace henkf
