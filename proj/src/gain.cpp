#include "henkf/gain.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace henkf {

namespace {
constexpr double kMaxCondition = 1e12;

// Symmetric solve X = A^(-1) B with a condition-number guard on A.
Matrix guarded_solve(const Matrix& a, const Matrix& b, const char* label) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues();
  const double emax = ev.maxCoeff();
  const double emin = ev.minCoeff();
  if (!(emin > 0.0) || emax / emin > kMaxCondition)
    throw SingularMatrixError(std::string(label) +
                              " is singular or ill-conditioned (cond > 1e12)");
  return Eigen::LLT<Matrix>(a).solve(b);
}

}  // namespace

void require_finite(const Matrix& m, const char* context) {
  if (!m.allFinite())
    throw DivergenceError(std::string(context) + " produced non-finite values");
}

GaussianSummary regularized_cov(const StateEnsemble& ens, const TaperSpec& taper,
                                const Matrix& innovation_cov) {
  const Index n = ens.dim();
  if (innovation_cov.size() != 0 &&
      (innovation_cov.rows() != n || innovation_cov.cols() != n))
    throw DimensionError("innovation covariance does not match state dimension");
  GaussianSummary out;
  out.mean = sample_mean(ens);
  Matrix sc = sample_cov(ens);
  if (taper.family == TaperSpec::Family::identity) {
    out.cov = std::move(sc);
  } else {
    const SparseMatrix t = taper_matrix(taper, n);
    out.cov = Matrix(t.cwiseProduct(sc));
  }
  if (innovation_cov.size() != 0) out.cov += innovation_cov;
  out.cov = ((out.cov + out.cov.transpose()) / 2).eval();
  return out;
}

Matrix innovation_matrix(const GaussianSummary& forecast, const Matrix& obs_matrix,
                         const Matrix& obs_noise) {
  Matrix s = obs_matrix * forecast.cov * obs_matrix.transpose() + obs_noise;
  return ((s + s.transpose()) / 2).eval();
}

Matrix kalman_gain(const GaussianSummary& forecast, const Matrix& obs_matrix,
                   const Matrix& obs_noise) {
  if (obs_matrix.cols() != forecast.cov.rows())
    throw DimensionError("observation matrix does not match state dimension");
  if (obs_noise.rows() != obs_matrix.rows() || obs_noise.cols() != obs_matrix.rows())
    throw DimensionError("observation noise does not match observation dimension");
  const Matrix s = innovation_matrix(forecast, obs_matrix, obs_noise);
  // K' = S^(-1) (Sigma H')' ; solve instead of inverting.
  Matrix kt = guarded_solve(s, obs_matrix * forecast.cov.transpose(),
                            "innovation matrix H Sigma H' + R");
  return kt.transpose();
}

Matrix gain_from_covariances(const Matrix& cross_cov, const Matrix& obs_cov) {
  if (cross_cov.cols() != obs_cov.rows())
    throw DimensionError("cross-covariance does not match observation covariance");
  Matrix sym = ((obs_cov + obs_cov.transpose()) / 2).eval();
  Matrix kt = guarded_solve(sym, cross_cov.transpose(),
                            "pseudo-observation covariance C_yy");
  return kt.transpose();
}

}  // namespace henkf
