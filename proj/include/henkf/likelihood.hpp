// Likelihood estimators for the latent-observation layer: the particle
// (mixture) form, the moment-matched ensemble form, and the integrated form
// for non-Gaussian data.
#pragma once

#include <vector>

#include "henkf/gain.hpp"
#include "henkf/model.hpp"
#include "henkf/taper.hpp"

namespace henkf {

enum class LikEstimator { particle, enkf, integrated_laplace, integrated_mc, exact };

struct LogLikEstimate {
  double value = 0.0;  // log scale; -inf marks a zero-likelihood event
  LikEstimator estimator = LikEstimator::exact;
  Index n_eval = 0;  // ensemble size used

  bool is_zero_likelihood() const {
    return value == -std::numeric_limits<double>::infinity();
  }
};

// log (1/N) sum_j N(y | H x_j, H Q H' + R), via log-sum-exp.
LogLikEstimate particle_loglik(const StateEnsemble& fore, const Vector& y,
                               const Matrix& obs_matrix, const Matrix& obs_noise,
                               const Matrix& innovation_cov);

// log N(y | H mu_hat, H Sigma_hat H' + R) with tapered forecast moments.
LogLikEstimate enkf_loglik(const StateEnsemble& fore, const Vector& y,
                           const Matrix& obs_matrix, const Matrix& obs_noise,
                           const Matrix& innovation_cov, const TaperSpec& taper);

// Factorizing log-density with derivatives in y, one coordinate at a time.
struct CoordDensity {
  std::function<double(Index l, double y)> logf;
  std::function<double(Index l, double y)> dlogf;
  std::function<double(Index l, double y)> d2logf;
};

CoordDensity coord_density_for(const ObsModel& obs, const Vector& z,
                               const ParamVector& theta);

struct LaplaceResult {
  Vector mode;
  Matrix neg_hessian;            // Sigma*^-1 at the mode
  double log_integrand_at_mode;  // log f(z|y*) + log N(y*|mu,Sigma)
  double gaussian_correction;    // (m/2) log 2pi - (1/2) logdet(neg_hessian)
  int iterations = 0;

  double log_integral() const { return log_integrand_at_mode + gaussian_correction; }
};

// Laplace approximation of log int f(z|y) N(y | mu, Sigma) dy by Newton
// ascent with step halving. Throws NumericalError after 100 iterations
// without gradient norm < 1e-8.
LaplaceResult laplace_integrate(const CoordDensity& f, const Vector& mu,
                                const Matrix& sigma);

enum class IntegrationStrategy { degenerate, laplace, monte_carlo };

// Integrated likelihood of the data z with both x and y integrated out,
// using the moment-matched forecast summary. The Monte Carlo strategy is an
// importance estimate from the Laplace Gaussian (experimental).
LogLikEstimate integrated_loglik(const StateEnsemble& fore, const Vector& z,
                                 const HssmModel& model, const ParamVector& theta,
                                 const TaperSpec& taper, IntegrationStrategy strategy,
                                 int mc_samples = 256, std::uint64_t mc_seed = 1);

// Same integral evaluated from precomputed latent-observation moments.
LogLikEstimate integrated_loglik_from_moments(const Vector& mu_y, const Matrix& sigma_y,
                                              const Vector& z, const ObsModel& obs,
                                              const ParamVector& theta,
                                              IntegrationStrategy strategy,
                                              Index n_eval, int mc_samples = 256,
                                              std::uint64_t mc_seed = 1);

// ---------------------------------------------------------------------------
// Variance study on the independent toy model y ~ N(0, (kappa+theta) I).

struct Example1 {
  int n = 1;
  double kappa = 4.0;  // forecast variance
  double theta = 1.0;  // observation noise variance

  Vector sample_data(Rng& rng) const;
  Matrix sample_forecast(Index n_members, Rng& rng) const;
  double true_loglik(const Vector& y) const;
  // Fast diagonal-structure paths (equal to the generic estimators).
  double particle_loglik_fast(const Matrix& members, const Vector& y) const;
  double enkf_loglik_fast(const Matrix& members, const Vector& y) const;
};

struct VarianceStudyConfig {
  std::vector<int> dims{1, 2, 4, 8, 16, 32};
  double target_variance = 2.0;
  long n_max = 1L << 20;
  int ensemble_replications = 200;
  int data_realizations = 100;
  long n_floor = 8;
  double kappa = 4.0;
  double theta = 1.0;
  std::uint64_t seed = 1;
};

struct VarianceStudyRow {
  int n = 0;
  LikEstimator estimator = LikEstimator::enkf;
  long minimal_n = 0;
  bool censored = false;
  double variance_at_minimal_n = 0.0;
};

// For each dimension and each estimator, the smallest ensemble size keeping
// the loglikelihood variance (averaged over data realizations) below the
// target: doubling search then bisection. Sizes above n_max are reported as
// censored, not errors.
std::vector<VarianceStudyRow> loglik_variance_study(const VarianceStudyConfig& config);

}  // namespace henkf
