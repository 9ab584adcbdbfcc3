// Common dense types. The numeric core works on plain Eigen matrices; the
// templated aliases keep free functions usable with any real scalar.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace henkf {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using SparseMatrix = Eigen::SparseMatrix<double>;

using Index = Eigen::Index;

}  // namespace henkf
