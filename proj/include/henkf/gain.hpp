// Regularized forecast moments and Kalman-gain algebra.
#pragma once

#include "henkf/ensemble.hpp"
#include "henkf/taper.hpp"

namespace henkf {

// Tapered forecast moments: mean from the sample mean, covariance
//   Sigma_hat = (sample_cov o taper) + Q.
// Q may be the zero matrix.
GaussianSummary regularized_cov(const StateEnsemble& ens, const TaperSpec& taper,
                                const Matrix& innovation_cov);

// Kalman gain K = Sigma H' (H Sigma H' + R)^(-1), computed through a
// symmetric solve of the innovation matrix (never an explicit inverse).
// Throws SingularMatrixError naming the innovation matrix if its condition
// number exceeds 1e12.
Matrix kalman_gain(const GaussianSummary& forecast, const Matrix& obs_matrix,
                   const Matrix& obs_noise);

// Gain from explicit cross- and marginal covariances (nonlinear-observation
// form): K = C_xy C_yy^(-1), with the same conditioning guard on C_yy.
Matrix gain_from_covariances(const Matrix& cross_cov, const Matrix& obs_cov);

// Innovation matrix H Sigma H' + R, symmetrized.
Matrix innovation_matrix(const GaussianSummary& forecast, const Matrix& obs_matrix,
                         const Matrix& obs_noise);

}  // namespace henkf
