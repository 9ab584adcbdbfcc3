// Covariance tapering: compactly supported correlation matrices applied by
// Hadamard product to sample covariances.
#pragma once

#include <functional>

#include "henkf/types.hpp"

namespace henkf {

// C2 Wendland correlation with support radius c:
//   rho(d) = (1 - d/c)_+^4 (4 d/c + 1).
double wendland_c2(double d, double c);

struct TaperSpec {
  enum class Family { wendland, identity };

  Family family = Family::identity;
  double range = 1.0;  // support radius c, index units
  // Symmetric nonnegative distance on index pairs; defaults to |i-j|.
  std::function<double(Index, Index)> distance;

  // Taper value for an index pair.
  double operator()(Index i, Index j) const;

  static TaperSpec identity_taper();
  // |i-j| distance on the integer grid.
  static TaperSpec grid(double range);
  // min(|i-j|, n-|i-j|) distance on a circle of n sites (Lorenz-96 geometry).
  static TaperSpec circle(double range, Index n);
  // Zero support beyond the diagonal: keeps sample variances only.
  static TaperSpec diagonal();
};

// The n x n taper matrix: symmetric, unit diagonal, entries in [0,1], zero
// for distance >= range. Sparse because of the compact support.
SparseMatrix taper_matrix(const TaperSpec& spec, Index n);

// Cross-space taper between two index sets with an explicit distance
// function, used by the nonlinear-observation update.
Matrix taper_cross_matrix(const TaperSpec& spec, Index rows, Index cols,
                          const std::function<double(Index, Index)>& distance);

}  // namespace henkf
