#include "henkf/obs_models.hpp"

#include <cmath>
#include <string>

#include "henkf/errors.hpp"
#include "henkf/stats.hpp"

namespace henkf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kZeroRain = 1e-12;  // rainfall measurements below this are exact zeros

// Best double root of y^kappa = z: representable roots (e.g. 8^(1/3) = 2)
// are returned exactly, otherwise the neighbor minimizing |y^kappa - z|.
double rainfall_root(double z, double kappa) {
  double best = kappa == 3.0   ? std::cbrt(z)
                : kappa == 2.0 ? std::sqrt(z)
                               : std::pow(z, 1.0 / kappa);
  double best_err = std::abs(std::pow(best, kappa) - z);
  const double inf = std::numeric_limits<double>::infinity();
  for (double cand :
       {std::nextafter(best, 0.0), std::nextafter(std::nextafter(best, 0.0), 0.0),
        std::nextafter(best, inf), std::nextafter(std::nextafter(best, inf), inf)}) {
    const double err = std::abs(std::pow(cand, kappa) - z);
    if (err < best_err) {
      best = cand;
      best_err = err;
    }
  }
  return best;
}
}  // namespace

ObsModel ObsModel::identity() { return ObsModel{}; }

ObsModel ObsModel::scale_mixture_t(double kappa, Vector sigma) {
  ObsModel m;
  m.family = Family::scale_mixture_t;
  m.kappa = kappa;
  m.sigma = std::move(sigma);
  return m;
}

ObsModel ObsModel::probit(Vector sigma) {
  ObsModel m;
  m.family = Family::probit;
  m.sigma = std::move(sigma);
  return m;
}

ObsModel ObsModel::rainfall(double kappa, Vector sigma) {
  if (kappa <= 1.0) throw ParameterDomainError("rainfall power must exceed 1");
  ObsModel m;
  m.family = Family::rainfall;
  m.kappa = kappa;
  m.sigma = std::move(sigma);
  return m;
}

ObsModel ObsModel::rainfall_unknown_kappa(int theta_index, Vector sigma) {
  ObsModel m;
  m.family = Family::rainfall;
  m.kappa_theta_index = theta_index;
  m.sigma = std::move(sigma);
  return m;
}

ObsModel ObsModel::poisson_log(int log_sigma_theta_index) {
  ObsModel m;
  m.family = Family::poisson_log;
  m.log_sigma_theta_index = log_sigma_theta_index;
  return m;
}

double ObsModel::scale(Index l, const ParamVector& theta) const {
  if (log_sigma_theta_index >= 0) return std::exp(theta[log_sigma_theta_index]);
  return sigma(sigma.size() == 1 ? 0 : l);
}

double ObsModel::power(const ParamVector& theta) const {
  if (kappa_theta_index >= 0) return theta[kappa_theta_index];
  return kappa;
}

double ObsModel::coord_log_density(double z, double y) const {
  if (family != Family::poisson_log)
    throw ConfigError("coordinate density only defined for smooth families");
  return z * y - std::exp(y) - std::lgamma(z + 1.0);
}

double ObsModel::coord_dlog(double z, double y) const {
  if (family != Family::poisson_log)
    throw ConfigError("coordinate density only defined for smooth families");
  return z - std::exp(y);
}

double ObsModel::coord_d2log(double /*z*/, double y) const {
  if (family != Family::poisson_log)
    throw ConfigError("coordinate density only defined for smooth families");
  return -std::exp(y);
}

double ObsModel::log_density(const Vector& z, const Vector& y,
                             const ParamVector& theta) const {
  if (z.size() != y.size()) throw DimensionError("z and y dimension mismatch");
  switch (family) {
    case Family::identity:
    case Family::scale_mixture_t:
      return (z - y).cwiseAbs().maxCoeff() == 0.0 ? 0.0 : kNegInf;
    case Family::probit: {
      for (Index l = 0; l < z.size(); ++l) {
        if (z(l) != 0.0 && z(l) != 1.0)
          throw DataDomainError("probit data must be 0 or 1");
        const bool positive = y(l) > 0.0;
        if ((z(l) == 1.0) != positive) return kNegInf;
      }
      return 0.0;
    }
    case Family::rainfall: {
      const double k = power(theta);
      for (Index l = 0; l < z.size(); ++l) {
        if (z(l) < 0.0) throw DataDomainError("rainfall data must be nonnegative");
        if (z(l) > kZeroRain) {
          if (std::abs(y(l) - rainfall_root(z(l), k)) > 1e-9) return kNegInf;
        } else if (y(l) > 0.0) {
          return kNegInf;
        }
      }
      return 0.0;
    }
    case Family::poisson_log: {
      double acc = 0.0;
      for (Index l = 0; l < z.size(); ++l) {
        if (z(l) < 0.0 || z(l) != std::floor(z(l)))
          throw DataDomainError("poisson data must be nonnegative integers");
        acc += coord_log_density(z(l), y(l));
      }
      return acc;
    }
  }
  return kNegInf;
}

Vector sample_scale_params_fcd(const Vector& y, const Vector& hx,
                               const Vector& sigma, double a, double b, Rng& rng) {
  if (a <= 0.0 || b <= 0.0)
    throw ParameterDomainError("inverse-gamma hyperparameters must be positive");
  if (y.size() != hx.size()) throw DimensionError("y and Hx dimension mismatch");
  Vector out(y.size());
  for (Index l = 0; l < y.size(); ++l) {
    const double s = sigma(sigma.size() == 1 ? 0 : l);
    const double r = (y(l) - hx(l)) / s;
    out(l) = rng.inv_gamma(a + 0.5, b + 0.5 * r * r);
  }
  return out;
}

namespace {

double poisson_coord_fcd_logpdf(double z, double y, double mu, double var) {
  return z * y - std::exp(y) - 0.5 * (y - mu) * (y - mu) / var;
}

}  // namespace

Vector sample_y_fcd(const Vector& z, const Vector& hx, const ObsModel& obs,
                    const ParamVector& theta, Rng& rng, const Vector* y_current) {
  if (z.size() != hx.size()) throw DimensionError("z and Hx dimension mismatch");
  const Index m = z.size();
  Vector y(m);
  switch (obs.family) {
    case ObsModel::Family::identity:
    case ObsModel::Family::scale_mixture_t:
      return z;
    case ObsModel::Family::probit: {
      constexpr double inf = std::numeric_limits<double>::infinity();
      for (Index l = 0; l < m; ++l) {
        if (z(l) != 0.0 && z(l) != 1.0)
          throw DataDomainError("probit data must be 0 or 1");
        const double s = obs.scale(l, theta);
        y(l) = z(l) == 1.0 ? truncated_normal(hx(l), s, 0.0, inf, rng)
                           : truncated_normal(hx(l), s, -inf, 0.0, rng);
        if ((z(l) == 1.0) != (y(l) > 0.0))
          throw NumericalError("probit draw sign does not match the datum");
      }
      return y;
    }
    case ObsModel::Family::rainfall: {
      const double k = obs.power(theta);
      constexpr double inf = std::numeric_limits<double>::infinity();
      for (Index l = 0; l < m; ++l) {
        if (z(l) < 0.0) throw DataDomainError("rainfall data must be nonnegative");
        if (z(l) > kZeroRain) {
          y(l) = rainfall_root(z(l), k);
        } else {
          y(l) = truncated_normal(hx(l), obs.scale(l, theta), -inf, 0.0, rng);
        }
      }
      return y;
    }
    case ObsModel::Family::poisson_log: {
      // Laplace-Gaussian proposal; a single Metropolis correction when the
      // chain's current value is supplied.
      const double s = obs.scale(0, theta);
      Vector var = Vector::Constant(m, s * s);
      const PoissonLaplace lap = poisson_y_mode_and_curvature(z, hx, var);
      for (Index l = 0; l < m; ++l) {
        const double prop_sd = std::sqrt(-1.0 / lap.hessian(l));
        const double prop = lap.mode(l) + prop_sd * rng.normal();
        if (y_current == nullptr) {
          y(l) = prop;
          continue;
        }
        const double cur = (*y_current)(l);
        const double log_target_ratio =
            poisson_coord_fcd_logpdf(z(l), prop, hx(l), var(l)) -
            poisson_coord_fcd_logpdf(z(l), cur, hx(l), var(l));
        const double dp = prop - lap.mode(l), dc = cur - lap.mode(l);
        const double log_prop_ratio =
            (-0.5 * dp * dp + 0.5 * dc * dc) / (prop_sd * prop_sd);
        const double log_alpha = log_target_ratio - log_prop_ratio;
        y(l) = std::log(std::max(rng.uniform(), 1e-300)) < log_alpha ? prop : cur;
      }
      return y;
    }
  }
  throw ConfigError("unhandled observation family");
}

double mh_update_kappa(const Vector& z, const Vector& hx, const Vector& sigma,
                       double kappa_current,
                       const std::function<double(double)>& log_prior,
                       double proposal_sd, Rng& rng) {
  if (proposal_sd <= 0.0) throw ParameterDomainError("proposal sd must be positive");
  if (kappa_current <= 1.0)
    throw ParameterDomainError("rainfall power must exceed 1");

  auto log_target_u = [&](double u) {
    const double k = std::exp(u);
    double acc = log_prior(k) + u;  // + u: Jacobian of the log reparametrization
    for (Index l = 0; l < z.size(); ++l) {
      if (z(l) <= kZeroRain) continue;
      const double s = sigma(sigma.size() == 1 ? 0 : l);
      const double root = rainfall_root(z(l), k);
      const double r = (root - hx(l)) / s;
      acc += -0.5 * r * r - std::log(s) - 0.5 * std::log(2.0 * M_PI);
      acc += (1.0 / k - 1.0) * std::log(z(l)) - std::log(k);  // Jacobian J_l
    }
    return acc;
  };

  const double u = std::log(kappa_current);
  const double u_prop = u + proposal_sd * rng.normal();
  if (std::exp(u_prop) <= 1.0) return kappa_current;  // outside the support
  const double log_alpha = log_target_u(u_prop) - log_target_u(u);
  if (std::log(std::max(rng.uniform(), 1e-300)) < log_alpha) return std::exp(u_prop);
  return kappa_current;
}

PoissonLaplace poisson_y_mode_and_curvature(const Vector& z, const Vector& mu,
                                            const Vector& prior_var,
                                            double extra_var) {
  if (z.size() != mu.size() || z.size() != prior_var.size())
    throw DimensionError("poisson mode inputs dimension mismatch");
  const Index m = z.size();
  PoissonLaplace out;
  out.mode.resize(m);
  out.hessian.resize(m);
  for (Index l = 0; l < m; ++l) {
    const double var = prior_var(l) + extra_var * extra_var;
    if (!(var > 0.0)) throw ParameterDomainError("prior variance must be positive");
    const double prec = 1.0 / var;
    double y = mu(l);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      const double ey = std::exp(std::min(y, 700.0));
      const double g = z(l) - ey - (y - mu(l)) * prec;
      if (std::abs(g) < 1e-10 * (1.0 + std::abs(z(l)))) {
        converged = true;
        break;
      }
      const double h = -ey - prec;
      y += std::clamp(-g / h, -5.0, 5.0);
    }
    if (!converged)
      throw NumericalError("poisson mode search did not converge at coordinate " +
                           std::to_string(l));
    out.mode(l) = y;
    out.hessian(l) = -std::exp(y) - prec;
  }
  return out;
}

}  // namespace henkf
