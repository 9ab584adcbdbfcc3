// Ensemble containers and moment estimators.
#pragma once

#include <Eigen/Dense>

#include "henkf/errors.hpp"
#include "henkf/types.hpp"

namespace henkf {

enum class EnsembleKind { forecast, filtering, smoothing };

// An n x N collection of state vectors at one time index. Immutable by
// convention: operations return new ensembles.
struct StateEnsemble {
  Matrix members;  // n rows (state dim) x N columns (ensemble size)
  int time_index = 0;
  EnsembleKind kind = EnsembleKind::filtering;

  Index dim() const { return members.rows(); }
  Index size() const { return members.cols(); }
};

struct GaussianSummary {
  Vector mean;
  Matrix cov;
};

// Column-wise mean of an ensemble-shaped matrix.
template <typename Derived>
VectorT<typename Derived::Scalar> column_mean(const Eigen::MatrixBase<Derived>& m) {
  if (m.cols() < 1) throw DimensionError("column_mean of empty ensemble");
  return m.rowwise().mean();
}

// Unbiased sample covariance (divisor N-1) of the columns.
template <typename Derived>
MatrixT<typename Derived::Scalar> column_cov(const Eigen::MatrixBase<Derived>& m) {
  if (m.cols() < 2)
    throw DegenerateEnsembleError("sample covariance needs at least 2 members");
  MatrixT<typename Derived::Scalar> centered =
      m.derived().colwise() - m.rowwise().mean().eval();
  MatrixT<typename Derived::Scalar> cov =
      (centered * centered.transpose()) / static_cast<double>(m.cols() - 1);
  return (cov + cov.transpose()) / 2;
}

// Unbiased sample cross-covariance between the columns of a (p x N) and
// b (q x N): a p x q matrix.
template <typename DerivedA, typename DerivedB>
MatrixT<typename DerivedA::Scalar> column_cross_cov(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.cols()) throw DimensionError("cross-covariance needs equal N");
  if (a.cols() < 2)
    throw DegenerateEnsembleError("sample cross-covariance needs at least 2 members");
  MatrixT<typename DerivedA::Scalar> ca = a.derived().colwise() - a.rowwise().mean().eval();
  MatrixT<typename DerivedB::Scalar> cb = b.derived().colwise() - b.rowwise().mean().eval();
  return (ca * cb.transpose()) / static_cast<double>(a.cols() - 1);
}

inline Vector sample_mean(const StateEnsemble& ens) { return column_mean(ens.members); }
inline Matrix sample_cov(const StateEnsemble& ens) { return column_cov(ens.members); }

// Throws DivergenceError if any entry is NaN/Inf; `context` names the caller.
void require_finite(const Matrix& m, const char* context);

}  // namespace henkf
