// Transformation-layer families: densities f(z|y,theta), full-conditional
// samplers of y, and parameter conditionals.
#pragma once

#include <functional>
#include <limits>

#include "henkf/param_vector.hpp"
#include "henkf/rng.hpp"
#include "henkf/types.hpp"

namespace henkf {

// All implemented families factorize over coordinates given y.
struct ObsModel {
  enum class Family { identity, scale_mixture_t, probit, rainfall, poisson_log };

  Family family = Family::identity;
  // Fixed per-coordinate scales sigma_{t,l}; size m, or size 1 to broadcast.
  Vector sigma = Vector::Constant(1, 1.0);
  // t degrees of freedom / rainfall power when fixed.
  double kappa = std::numeric_limits<double>::quiet_NaN();
  // Rainfall with unknown power: index of kappa in theta (-1 when fixed).
  int kappa_theta_index = -1;
  // Poisson overdispersion: index of log sigma in theta (-1 when fixed).
  int log_sigma_theta_index = -1;

  static ObsModel identity();
  static ObsModel scale_mixture_t(double kappa, Vector sigma);
  static ObsModel probit(Vector sigma);
  static ObsModel rainfall(double kappa, Vector sigma);
  static ObsModel rainfall_unknown_kappa(int theta_index, Vector sigma);
  static ObsModel poisson_log(int log_sigma_theta_index);

  bool is_identity() const { return family == Family::identity; }
  // Continuous density in y, usable with the Laplace integration.
  bool has_smooth_density() const { return family == Family::poisson_log; }

  double scale(Index l, const ParamVector& theta) const;
  double power(const ParamVector& theta) const;

  // log f(z|y,theta) summed over coordinates. Point-mass families return 0
  // when consistent and -inf otherwise (rainfall positive part contributes
  // the transformed-density value; used in importance weights).
  double log_density(const Vector& z, const Vector& y, const ParamVector& theta) const;

  // Per-coordinate log f and derivatives in y, for Laplace integration.
  double coord_log_density(double z, double y) const;
  double coord_dlog(double z, double y) const;
  double coord_d2log(double z, double y) const;
};

// Scale-mixture parameter conditional: independent draws
//   theta_l ~ InvGamma(a + 1/2, b + ((y_l - hx_l)/sigma_l)^2 / 2).
Vector sample_scale_params_fcd(const Vector& y, const Vector& hx,
                               const Vector& sigma, double a, double b, Rng& rng);

// Full conditional of the latent observation y given (z, Hx, theta),
// coordinate-wise. For the Poisson family this is a Laplace-Gaussian draw;
// pass the chain's current y to add one Metropolis accept/reject step.
Vector sample_y_fcd(const Vector& z, const Vector& hx, const ObsModel& obs,
                    const ParamVector& theta, Rng& rng,
                    const Vector* y_current = nullptr);

// One Metropolis-Hastings step for the rainfall power kappa, targeting
//   p(kappa) prod_{l: z_l>0} N(z_l^{1/kappa} | hx_l, sigma_l^2) J_l(kappa),
// with J_l(kappa) = z_l^{(1/kappa)-1} / kappa. Random walk on log kappa.
double mh_update_kappa(const Vector& z, const Vector& hx, const Vector& sigma,
                       double kappa_current,
                       const std::function<double(double)>& log_prior,
                       double proposal_sd, Rng& rng);

// Coordinate-wise Newton maximization of z*y - e^y - (y - mu)^2 / (2 s^2).
// `extra_var` is added to every prior variance (overdispersion term).
struct PoissonLaplace {
  Vector mode;        // y*
  Vector hessian;     // second derivative -e^{y*} - 1/s^2 (negative)
};
PoissonLaplace poisson_y_mode_and_curvature(const Vector& z, const Vector& mu,
                                            const Vector& prior_var,
                                            double extra_var = 0.0);

}  // namespace henkf
