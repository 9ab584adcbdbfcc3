// Shared helpers for the test suites.
#pragma once

#include <henkf/ensemble.hpp>
#include <henkf/rng.hpp>
#include <henkf/types.hpp>

namespace henkf::test {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

inline StateEnsemble random_ensemble(Index n, Index N, Rng& rng,
                                     EnsembleKind kind = EnsembleKind::forecast,
                                     int t = 1) {
  StateEnsemble ens;
  ens.members = random_matrix(n, N, rng);
  ens.kind = kind;
  ens.time_index = t;
  return ens;
}

// Random symmetric positive definite matrix with unit-scale eigenvalues.
inline Matrix random_spd(Index n, Rng& rng) {
  Matrix a = random_matrix(n, n, rng);
  return Matrix(a * a.transpose() / static_cast<double>(n) +
                0.5 * Matrix::Identity(n, n));
}

}  // namespace henkf::test
