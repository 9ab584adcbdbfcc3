#include "henkf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "henkf/errors.hpp"

namespace henkf {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double norm_logcdf(double z) {
  if (z > -8.0) return std::log(norm_cdf(z));
  // Asymptotic expansion for the deep lower tail.
  const double z2 = z * z;
  return -0.5 * z2 - 0.5 * kLog2Pi - std::log(-z) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ParameterDomainError("norm_quantile requires p in (0,1)");
  // Acklam's algorithm.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement step.
  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double logsumexp_sorted(std::span<const double> v) {
  if (v.empty()) throw DimensionError("logsumexp of empty range");
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = sorted.back();
  if (!std::isfinite(m)) return m;  // all -inf, or NaN propagates
  double acc = 0.0;
  for (double x : sorted) acc += std::exp(x - m);
  return m + std::log(acc);
}

double log_mvn_density(const Vector& x, const Vector& mean, const Matrix& cov,
                       const char* label) {
  const Index m = x.size();
  if (mean.size() != m || cov.rows() != m || cov.cols() != m)
    throw DimensionError("log_mvn_density dimension mismatch");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw SingularMatrixError(std::string(label) + " is not positive definite");
  const Matrix& L = llt.matrixLLT();
  double half_logdet = 0.0;
  for (Index i = 0; i < m; ++i) half_logdet += std::log(L(i, i));
  const Vector w = llt.matrixL().solve(x - mean);
  return -0.5 * static_cast<double>(m) * kLog2Pi - half_logdet - 0.5 * w.squaredNorm();
}

Vector mvn_sample(const Vector& mean, const Matrix& chol_lower, Rng& rng) {
  Vector z(mean.size());
  for (Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + chol_lower * z;
}

Matrix psd_cholesky(const Matrix& cov, const char* label) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // PSD-but-singular input (e.g. zero rows for deterministic coordinates):
  // use the eigendecomposition, flooring tiny negative eigenvalues.
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector evals = es.eigenvalues();
  const double scale = std::max(evals.cwiseAbs().maxCoeff(), 1e-300);
  if (evals.minCoeff() < -1e-8 * scale)
    throw SingularMatrixError(std::string(label) + " is not positive semidefinite");
  Matrix root = es.eigenvectors() * evals.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  return root;
}

namespace {

// Robert (1995) one-sided exponential rejection sampler for the upper tail
// of a standard normal truncated to (a, inf), a > 0.
double tail_normal(double a, Rng& rng) {
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double u = std::max(rng.uniform(), 1e-300);
    const double x = a - std::log(u) / alpha;
    const double v = rng.uniform();
    if (std::log(std::max(v, 1e-300)) <= -0.5 * (x - alpha) * (x - alpha)) return x;
  }
}

}  // namespace

double truncated_normal(double mean, double sd, double lower, double upper,
                        Rng& rng) {
  if (sd <= 0.0) throw ParameterDomainError("truncated_normal needs sd > 0");
  if (!(lower < upper)) throw ParameterDomainError("truncated_normal bounds inverted");
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;

  // One-sided deep-tail cases handled by rejection; inverse CDF elsewhere.
  if (!std::isfinite(b) && a > 6.0) return mean + sd * tail_normal(a, rng);
  if (!std::isfinite(a) && b < -6.0) return mean - sd * tail_normal(-b, rng);

  const double Fa = std::isfinite(a) ? norm_cdf(a) : 0.0;
  const double Fb = std::isfinite(b) ? norm_cdf(b) : 1.0;
  if (Fb - Fa > 1e-12) {
    const double u = rng.uniform();
    const double p = std::min(std::max(Fa + u * (Fb - Fa), 1e-300), 1.0 - 1e-16);
    double z = norm_quantile(p);
    z = std::min(std::max(z, a), b);
    return mean + sd * z;
  }
  // Interval mass numerically zero: both bounds in the same far tail.
  if (a > 0.0) {
    double z = tail_normal(a, rng);
    int tries = 0;
    while (z > b && ++tries < 1000) z = tail_normal(a, rng);
    return mean + sd * std::min(z, b);
  }
  double z = tail_normal(-b, rng);
  int tries = 0;
  while (z > -a && ++tries < 1000) z = tail_normal(-b, rng);
  return mean - sd * std::min(z, -a);
}

}  // namespace henkf
