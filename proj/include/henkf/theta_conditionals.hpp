// Closed-form parameter conditionals used by the Gibbs-type smoothers.
#pragma once

#include <vector>

#include "henkf/rng.hpp"
#include "henkf/types.hpp"

namespace henkf {

// Conditional of a scalar evolution coefficient theta in
//   x_t = theta * xtilde_t + N(0, Q),   t = 2..T,
// under a N(prior_mean, prior_sd^2) prior:
//   theta | x ~ N( (mu/s^2 + sum xtilde' Q^-1 x) / (1/s^2 + sum xtilde' Q^-1 xtilde),
//                  1 / (1/s^2 + sum xtilde' Q^-1 xtilde) ).
// `xtilde` and `x` hold the T-1 regression pairs.
std::pair<double, double> scalar_evolution_coeff_moments(
    const std::vector<Vector>& xtilde, const std::vector<Vector>& x, const Matrix& q,
    double prior_mean, double prior_sd);

double scalar_evolution_coeff_fcd(const std::vector<Vector>& xtilde,
                                  const std::vector<Vector>& x, const Matrix& q,
                                  double prior_mean, double prior_sd, Rng& rng);

// Same conditional for the Lorenz-96 scaling parameter: the regressors are
// xtilde_t = L_{F,delta}(x_{t-1}) computed from the trajectory x_{1:T}.
double lorenz_theta_fcd(const std::vector<Vector>& x_traj, const Matrix& q,
                        double prior_mean, double prior_sd, Rng& rng,
                        double forcing = 8.0, double delta = 0.2, int substeps = 40);

}  // namespace henkf
