// Scalar and multivariate Gaussian utilities shared across the filters.
#pragma once

#include <span>

#include "henkf/rng.hpp"
#include "henkf/types.hpp"

namespace henkf {

double norm_pdf(double z);
double norm_cdf(double z);
double norm_logcdf(double z);
// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9).
double norm_quantile(double p);

// log sum_i exp(v_i), computed over a sorted copy so the result is exactly
// invariant under permutations of v.
double logsumexp_sorted(std::span<const double> v);

// log N(x | mean, cov). Throws SingularMatrixError (naming `label`) if cov is
// not positive definite.
double log_mvn_density(const Vector& x, const Vector& mean, const Matrix& cov,
                       const char* label = "covariance");

// Draw from N(mean, L L') given the lower Cholesky factor L.
Vector mvn_sample(const Vector& mean, const Matrix& chol_lower, Rng& rng);

// Lower Cholesky factor of a PSD matrix; tolerates tiny negative eigenvalues
// by pivoted-LDLT fallback. Throws SingularMatrixError for indefinite input.
Matrix psd_cholesky(const Matrix& cov, const char* label = "covariance");

// N(mean, sd^2) truncated to (lower, upper); half-open bounds allowed via
// +/- infinity. Inverse-CDF with stable tail handling, rejection fallback
// beyond ~6 sd.
double truncated_normal(double mean, double sd, double lower, double upper,
                        Rng& rng);

}  // namespace henkf
