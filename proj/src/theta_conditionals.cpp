#include "henkf/theta_conditionals.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "henkf/errors.hpp"
#include "henkf/lorenz96.hpp"

namespace henkf {

std::pair<double, double> scalar_evolution_coeff_moments(
    const std::vector<Vector>& xtilde, const std::vector<Vector>& x, const Matrix& q,
    double prior_mean, double prior_sd) {
  if (xtilde.size() != x.size())
    throw DimensionError("theta conditional needs matched regression pairs");
  if (prior_sd <= 0.0) throw ParameterDomainError("prior sd must be positive");
  Eigen::LLT<Matrix> llt(q);
  if (llt.info() != Eigen::Success)
    throw SingularMatrixError("innovation covariance Q is not positive definite");

  double num = prior_mean / (prior_sd * prior_sd);
  double prec = 1.0 / (prior_sd * prior_sd);
  for (std::size_t t = 0; t < x.size(); ++t) {
    num += xtilde[t].dot(llt.solve(x[t]));
    prec += xtilde[t].dot(llt.solve(xtilde[t]));
  }
  return {num / prec, 1.0 / prec};
}

double scalar_evolution_coeff_fcd(const std::vector<Vector>& xtilde,
                                  const std::vector<Vector>& x, const Matrix& q,
                                  double prior_mean, double prior_sd, Rng& rng) {
  const auto [mean, var] = scalar_evolution_coeff_moments(xtilde, x, q, prior_mean,
                                                          prior_sd);
  return mean + std::sqrt(var) * rng.normal();
}

double lorenz_theta_fcd(const std::vector<Vector>& x_traj, const Matrix& q,
                        double prior_mean, double prior_sd, Rng& rng,
                        double forcing, double delta, int substeps) {
  std::vector<Vector> xtilde, x;
  for (std::size_t t = 1; t < x_traj.size(); ++t) {
    xtilde.push_back(lorenz96_step(x_traj[t - 1], forcing, delta, substeps));
    x.push_back(x_traj[t]);
  }
  return scalar_evolution_coeff_fcd(xtilde, x, q, prior_mean, prior_sd, rng);
}

}  // namespace henkf
