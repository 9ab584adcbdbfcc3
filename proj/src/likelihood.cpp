#include "henkf/likelihood.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>

#include "henkf/stats.hpp"

namespace henkf {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

LogLikEstimate particle_loglik(const StateEnsemble& fore, const Vector& y,
                               const Matrix& obs_matrix, const Matrix& obs_noise,
                               const Matrix& innovation_cov) {
  const Index n_members = fore.size();
  if (n_members < 1) throw DimensionError("particle likelihood needs N >= 1");
  const Index m = y.size();
  Matrix s = obs_noise;
  if (innovation_cov.size() != 0 && innovation_cov.cwiseAbs().maxCoeff() > 0.0)
    s += obs_matrix * innovation_cov * obs_matrix.transpose();
  s = ((s + s.transpose()) / 2).eval();
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success)
    throw SingularMatrixError("mixture covariance H Q H' + R is not positive definite");
  double half_logdet = 0.0;
  for (Index i = 0; i < m; ++i) half_logdet += std::log(llt.matrixLLT()(i, i));
  const double norm_const = -0.5 * double(m) * kLog2Pi - half_logdet;

  const Matrix resid = (-(obs_matrix * fore.members)).colwise() + y;
  const Matrix white = llt.matrixL().solve(resid);
  std::vector<double> logs(n_members);
  for (Index j = 0; j < n_members; ++j)
    logs[j] = norm_const - 0.5 * white.col(j).squaredNorm();

  LogLikEstimate out;
  out.value = logsumexp_sorted(logs) - std::log(double(n_members));
  out.estimator = LikEstimator::particle;
  out.n_eval = n_members;
  return out;
}

LogLikEstimate enkf_loglik(const StateEnsemble& fore, const Vector& y,
                           const Matrix& obs_matrix, const Matrix& obs_noise,
                           const Matrix& innovation_cov, const TaperSpec& taper) {
  if (fore.size() < 2) throw DegenerateEnsembleError("ensemble likelihood needs N >= 2");
  const GaussianSummary g = regularized_cov(fore, taper, innovation_cov);
  const Matrix s = innovation_matrix(g, obs_matrix, obs_noise);
  LogLikEstimate out;
  out.value = log_mvn_density(y, obs_matrix * g.mean, s,
                              "marginal covariance H Sigma H' + R");
  out.estimator = LikEstimator::enkf;
  out.n_eval = fore.size();
  return out;
}

CoordDensity coord_density_for(const ObsModel& obs, const Vector& z,
                               const ParamVector& theta) {
  if (!obs.has_smooth_density())
    throw ConfigError("observation family has no smooth density in y");
  (void)theta;
  CoordDensity f;
  f.logf = [obs, z](Index l, double y) { return obs.coord_log_density(z(l), y); };
  f.dlogf = [obs, z](Index l, double y) { return obs.coord_dlog(z(l), y); };
  f.d2logf = [obs, z](Index l, double y) { return obs.coord_d2log(z(l), y); };
  return f;
}

LaplaceResult laplace_integrate(const CoordDensity& f, const Vector& mu,
                                const Matrix& sigma) {
  const Index m = mu.size();
  Eigen::LLT<Matrix> sig_llt(sigma);
  if (sig_llt.info() != Eigen::Success)
    throw SingularMatrixError("latent-observation covariance is not positive definite");
  const Matrix sig_inv = sig_llt.solve(Matrix::Identity(m, m));
  double sig_half_logdet = 0.0;
  for (Index i = 0; i < m; ++i) sig_half_logdet += std::log(sig_llt.matrixLLT()(i, i));

  auto objective = [&](const Vector& y) {
    double acc = 0.0;
    for (Index l = 0; l < m; ++l) acc += f.logf(l, y(l));
    const Vector d = y - mu;
    acc += -0.5 * double(m) * kLog2Pi - sig_half_logdet -
           0.5 * d.dot(sig_inv * d);
    return acc;
  };

  Vector y = mu;
  double g_cur = objective(y);
  std::vector<double> grad_trace;
  int iterations = 0;
  bool converged = false;
  Matrix neg_hess(m, m);
  for (int it = 0; it < 100; ++it) {
    iterations = it + 1;
    Vector grad(m);
    Vector d2(m);
    for (Index l = 0; l < m; ++l) {
      grad(l) = f.dlogf(l, y(l));
      d2(l) = f.d2logf(l, y(l));
    }
    grad -= sig_inv * (y - mu);
    const double gnorm = grad.norm();
    grad_trace.push_back(gnorm);
    if (gnorm < 1e-8) {
      converged = true;
      neg_hess = sig_inv;
      neg_hess.diagonal() -= d2;
      break;
    }
    Matrix nh = sig_inv;
    nh.diagonal() -= d2;
    Eigen::LLT<Matrix> nh_llt(nh);
    if (nh_llt.info() != Eigen::Success)
      throw NumericalError("Laplace Hessian lost positive definiteness");
    Vector step = nh_llt.solve(grad);
    // Step-halving line search.
    double alpha = 1.0;
    for (int half = 0; half < 40; ++half) {
      const Vector cand = y + alpha * step;
      const double g_cand = objective(cand);
      if (g_cand >= g_cur - 1e-15) {
        y = cand;
        g_cur = g_cand;
        break;
      }
      alpha /= 2.0;
    }
  }
  if (!converged) {
    std::ostringstream oss;
    oss << "Laplace mode search did not converge; gradient-norm trace:";
    const std::size_t tail = grad_trace.size() > 5 ? grad_trace.size() - 5 : 0;
    for (std::size_t i = tail; i < grad_trace.size(); ++i) oss << " " << grad_trace[i];
    throw NumericalError(oss.str());
  }

  LaplaceResult out;
  out.mode = y;
  out.neg_hessian = neg_hess;
  out.log_integrand_at_mode = g_cur;
  Eigen::LLT<Matrix> nh_llt(neg_hess);
  if (nh_llt.info() != Eigen::Success)
    throw NumericalError("Laplace curvature is not positive definite at the mode");
  double nh_half_logdet = 0.0;
  for (Index i = 0; i < m; ++i) nh_half_logdet += std::log(nh_llt.matrixLLT()(i, i));
  out.gaussian_correction = 0.5 * double(m) * kLog2Pi - nh_half_logdet;
  out.iterations = iterations;
  return out;
}

LogLikEstimate integrated_loglik_from_moments(const Vector& mu_y, const Matrix& sigma_y,
                                              const Vector& z, const ObsModel& obs,
                                              const ParamVector& theta,
                                              IntegrationStrategy strategy,
                                              Index n_eval, int mc_samples,
                                              std::uint64_t mc_seed) {
  LogLikEstimate out;
  out.n_eval = n_eval;
  if (strategy == IntegrationStrategy::degenerate || obs.is_identity()) {
    out.estimator = LikEstimator::enkf;
    out.value = log_mvn_density(z, mu_y, sigma_y, "marginal covariance H Sigma H' + R");
    return out;
  }
  const CoordDensity f = coord_density_for(obs, z, theta);
  const LaplaceResult lap = laplace_integrate(f, mu_y, sigma_y);
  if (strategy == IntegrationStrategy::laplace) {
    out.estimator = LikEstimator::integrated_laplace;
    out.value = lap.log_integral();
    return out;
  }

  // Importance estimate from the Laplace Gaussian N(y*, neg_hessian^-1).
  const Index m = mu_y.size();
  Eigen::LLT<Matrix> nh_llt(lap.neg_hessian);
  double nh_half_logdet = 0.0;
  for (Index i = 0; i < m; ++i) nh_half_logdet += std::log(nh_llt.matrixLLT()(i, i));
  Eigen::LLT<Matrix> sig_llt(sigma_y);
  double sig_half_logdet = 0.0;
  for (Index i = 0; i < m; ++i) sig_half_logdet += std::log(sig_llt.matrixLLT()(i, i));

  Rng rng = stream(mc_seed, RngPhase::study, 0, 7771);
  std::vector<double> logs(mc_samples);
  Vector zvec(m);
  for (int s = 0; s < mc_samples; ++s) {
    for (Index i = 0; i < m; ++i) zvec(i) = rng.normal();
    // y = y* + L^-T z has covariance (L L')^-1 = neg_hessian^-1.
    const Vector y =
        lap.mode + nh_llt.matrixU().solve(zvec);
    double logf = 0.0;
    for (Index l = 0; l < m; ++l) logf += f.logf(l, y(l));
    const Vector d = y - mu_y;
    const double log_gauss = -0.5 * double(m) * kLog2Pi - sig_half_logdet -
                             0.5 * sig_llt.matrixL().solve(d).squaredNorm();
    const Vector dq = y - lap.mode;
    const double log_q = -0.5 * double(m) * kLog2Pi + nh_half_logdet -
                         0.5 * (nh_llt.matrixL().transpose() * dq).squaredNorm();
    logs[s] = logf + log_gauss - log_q;
  }
  out.estimator = LikEstimator::integrated_mc;
  out.value = logsumexp_sorted(logs) - std::log(double(mc_samples));
  return out;
}

LogLikEstimate integrated_loglik(const StateEnsemble& fore, const Vector& z,
                                 const HssmModel& model, const ParamVector& theta,
                                 const TaperSpec& taper, IntegrationStrategy strategy,
                                 int mc_samples, std::uint64_t mc_seed) {
  const int t = fore.time_index;
  const Matrix q = model.innovation(theta, t);
  const GaussianSummary g = regularized_cov(fore, taper, q);
  const Matrix h = model.obs_matrix(theta, t);
  const Matrix r = model.obs_noise(theta, t);
  const Vector mu_y = h * g.mean;
  const Matrix sigma_y = innovation_matrix(g, h, r);
  return integrated_loglik_from_moments(mu_y, sigma_y, z, model.transformation, theta,
                                        strategy, fore.size(), mc_samples, mc_seed);
}

// ---------------------------------------------------------------------------

Vector Example1::sample_data(Rng& rng) const {
  Vector y(n);
  const double sd = std::sqrt(kappa + theta);
  for (Index i = 0; i < n; ++i) y(i) = sd * rng.normal();
  return y;
}

Matrix Example1::sample_forecast(Index n_members, Rng& rng) const {
  Matrix x(n, n_members);
  const double sd = std::sqrt(kappa);
  for (Index j = 0; j < n_members; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = sd * rng.normal();
  return x;
}

double Example1::true_loglik(const Vector& y) const {
  const double v = kappa + theta;
  return -0.5 * n * (kLog2Pi + std::log(v)) - 0.5 * y.squaredNorm() / v;
}

double Example1::particle_loglik_fast(const Matrix& members, const Vector& y) const {
  const Index n_members = members.cols();
  const double norm_const = -0.5 * n * (kLog2Pi + std::log(theta));
  std::vector<double> logs(n_members);
  for (Index j = 0; j < n_members; ++j)
    logs[j] = norm_const - 0.5 * (y - members.col(j)).squaredNorm() / theta;
  return logsumexp_sorted(logs) - std::log(double(n_members));
}

double Example1::enkf_loglik_fast(const Matrix& members, const Vector& y) const {
  const Index n_members = members.cols();
  if (n_members < 2) throw DegenerateEnsembleError("ensemble likelihood needs N >= 2");
  const Vector mu = members.rowwise().mean();
  const Vector var =
      (members.colwise() - mu).rowwise().squaredNorm() / double(n_members - 1);
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double v = var(i) + theta;
    const double d = y(i) - mu(i);
    acc += -0.5 * (kLog2Pi + std::log(v)) - 0.5 * d * d / v;
  }
  return acc;
}

namespace {

struct VarianceEvaluation {
  bool exceeded = false;
  double average_variance = 0.0;  // partial lower bound when exceeded
};

// Variance of the loglikelihood over ensemble replications, averaged over
// data realizations. Stops early (exactly, using nonnegativity and a range
// bound on the variance) once the average provably exceeds the target.
VarianceEvaluation evaluate_variance(const Example1& ex, long n_members,
                                     LikEstimator estimator,
                                     const VarianceStudyConfig& cfg) {
  const double budget = cfg.target_variance * cfg.data_realizations;
  double total = 0.0;
  for (int yi = 0; yi < cfg.data_realizations; ++yi) {
    Rng yrng = stream(cfg.seed, RngPhase::data, ex.n, yi);
    const Vector y = ex.sample_data(yrng);
    // Welford accumulation over ensemble replications.
    double mean = 0.0, m2 = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int rep = 0; rep < cfg.ensemble_replications; ++rep) {
      Rng erng = stream(cfg.seed, RngPhase::study, ex.n, yi, rep);
      const Matrix members = ex.sample_forecast(n_members, erng);
      const double ll = estimator == LikEstimator::particle
                            ? ex.particle_loglik_fast(members, y)
                            : ex.enkf_loglik_fast(members, y);
      const double d = ll - mean;
      mean += d / (rep + 1);
      m2 += d * (ll - mean);
      lo = std::min(lo, ll);
      hi = std::max(hi, ll);
      // Sum of squared deviations over the full run is at least
      // (hi-lo)^2/2, so the final variance is at least the bound below.
      const double bound =
          (hi - lo) * (hi - lo) / (2.0 * (cfg.ensemble_replications - 1));
      if (total + bound > budget) return {true, (total + bound) / cfg.data_realizations};
    }
    total += m2 / (cfg.ensemble_replications - 1);
    if (total > budget) return {true, total / cfg.data_realizations};
  }
  return {false, total / cfg.data_realizations};
}

}  // namespace

std::vector<VarianceStudyRow> loglik_variance_study(const VarianceStudyConfig& cfg) {
  if (cfg.ensemble_replications < 50)
    throw ConfigError("variance study needs at least 50 ensemble replications");
  std::vector<VarianceStudyRow> rows;
  for (int n : cfg.dims) {
    Example1 ex{n, cfg.kappa, cfg.theta};
    for (LikEstimator est : {LikEstimator::enkf, LikEstimator::particle}) {
      VarianceStudyRow row;
      row.n = n;
      row.estimator = est;

      long lo = 1, hi = cfg.n_floor;  // lo = largest size known (or assumed) to fail
      VarianceEvaluation eval = evaluate_variance(ex, hi, est, cfg);
      while (eval.exceeded && hi < cfg.n_max) {
        lo = hi;
        hi = std::min(hi * 2, cfg.n_max);
        eval = evaluate_variance(ex, hi, est, cfg);
      }
      if (eval.exceeded) {
        row.minimal_n = cfg.n_max;
        row.censored = true;
        row.variance_at_minimal_n = eval.average_variance;  // partial lower bound
      } else {
        // Bisect (lo, hi]; resolution max(1, hi/20) keeps the cost bounded.
        double var_hi = eval.average_variance;
        while (hi - lo > std::max<long>(1, hi / 20)) {
          const long mid = lo + (hi - lo) / 2;
          const VarianceEvaluation emid = evaluate_variance(ex, mid, est, cfg);
          if (emid.exceeded) {
            lo = mid;
          } else {
            hi = mid;
            var_hi = emid.average_variance;
          }
        }
        row.minimal_n = hi;
        row.censored = false;
        row.variance_at_minimal_n = var_hi;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace henkf
