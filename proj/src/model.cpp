#include "henkf/model.hpp"

#include <cmath>

#include "henkf/errors.hpp"
#include "henkf/stats.hpp"

namespace henkf {

double matern15(double d, double lambda) {
  if (lambda <= 0.0) throw ParameterDomainError("matern scale must be positive");
  if (d < 0.0) throw ParameterDomainError("matern distance must be nonnegative");
  const double u = std::sqrt(3.0) * d / lambda;
  return (1.0 + u) * std::exp(-u);
}

double powered_exponential_corr(double d, double power, double scale) {
  if (scale <= 0.0) throw ParameterDomainError("correlation scale must be positive");
  if (power <= 0.0 || power > 2.0)
    throw ParameterDomainError("powered exponential needs power in (0,2]");
  return std::exp(-std::pow(d / scale, power));
}

CovFunction CovFunction::powered_exp(double power, double scale, double amplitude) {
  CovFunction f;
  f.family = Family::powered_exponential;
  f.power = power;
  f.scale = scale;
  f.amplitude = amplitude;
  return f;
}

CovFunction CovFunction::matern(double scale, double amplitude) {
  CovFunction f;
  f.family = Family::matern_smooth15;
  f.scale = scale;
  f.amplitude = amplitude;
  return f;
}

CovFunction CovFunction::from_matrix(Matrix m) {
  CovFunction f;
  f.family = Family::from_matrix;
  f.matrix = std::move(m);
  return f;
}

Matrix CovFunction::build(Index n,
                          const std::function<double(Index, Index)>& distance) const {
  if (family == Family::from_matrix) return matrix;
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double d = distance(i, j);
      const double corr = family == Family::matern_smooth15
                              ? matern15(d, scale)
                              : powered_exponential_corr(d, power, scale);
      c(i, j) = c(j, i) = amplitude * corr;
    }
  }
  return c;
}

Matrix CovFunction::build_grid(Index n) const {
  return build(n, [](Index i, Index j) { return std::abs(double(i - j)); });
}

Matrix sample_initial_ensemble(const HssmModel& model, Index n_members,
                               std::uint64_t seed) {
  Matrix members(model.state_dim, n_members);
  if (model.init_sampler) {
    for (Index j = 0; j < n_members; ++j) {
      Rng rng = stream(seed, RngPhase::init, 0, static_cast<std::uint64_t>(j));
      members.col(j) = model.init_sampler(rng);
    }
    return members;
  }
  const Matrix chol = psd_cholesky(model.init_cov, "initial covariance");
  for (Index j = 0; j < n_members; ++j) {
    Rng rng = stream(seed, RngPhase::init, 0, static_cast<std::uint64_t>(j));
    members.col(j) = mvn_sample(model.init_mean, chol, rng);
  }
  return members;
}

}  // namespace henkf
