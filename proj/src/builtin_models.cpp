#include "henkf/builtin_models.hpp"

#include <cmath>
#include <mutex>
#include <set>
#include <sstream>
#include <tuple>

#include "henkf/errors.hpp"
#include "henkf/lorenz96.hpp"
#include "henkf/stats.hpp"
#include "henkf/theta_conditionals.hpp"

namespace henkf {

Matrix cloud_evolution_matrix(double g1, double g2, double g3, Index n) {
  if (n < 2) throw DimensionError("cloud evolution needs n >= 2");
  Matrix m = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    m(i, i) = g1;
    if (i + 1 < n) {
      m(i, i + 1) = g2;
      m(i + 1, i) = g3;
    }
  }
  return m;
}

PaperModelName paper_model_from_string(const std::string& name) {
  if (name == "toy_example4") return PaperModelName::toy_example4;
  if (name == "sim_study") return PaperModelName::sim_study;
  if (name == "cloud") return PaperModelName::cloud;
  if (name == "lorenz96") return PaperModelName::lorenz96;
  throw ConfigError("unknown model name: " + name);
}

namespace {

// Override map with known-key validation.
class Config {
 public:
  explicit Config(const std::map<std::string, double>& overrides)
      : overrides_(overrides) {}

  double get(const std::string& key, double fallback) {
    seen_.insert(key);
    auto it = overrides_.find(key);
    return it == overrides_.end() ? fallback : it->second;
  }

  void finish() const {
    for (const auto& [key, value] : overrides_) {
      (void)value;
      if (!seen_.count(key)) throw ConfigError("unknown model override: " + key);
    }
  }

 private:
  const std::map<std::string, double>& overrides_;
  std::set<std::string> seen_;
};

const Matrix& cached_climatology(Index n, double forcing, double delta, int substeps,
                                 int burn_in, int samples, std::uint64_t seed) {
  using Key = std::tuple<Index, double, double, int, int, int, std::uint64_t>;
  static std::map<Key, Matrix> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  const Key key{n, forcing, delta, substeps, burn_in, samples, seed};
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, lorenz_climatology(n, forcing, delta, substeps, burn_in,
                                               samples, seed))
             .first;
  return it->second;
}

double invgamma_logpdf(double x, double a, double b) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

PaperModel build_toy_example4(Config& cfg) {
  PaperModel pm;
  const Index n = static_cast<Index>(cfg.get("n", 10));
  const double a = cfg.get("a", 3.0);
  const double b = cfg.get("b", 2.0);
  const double mean = cfg.get("mean", 0.2);
  const double pe_power = cfg.get("pe_power", 1.8);
  const double pe_scale = cfg.get("pe_scale", 3.0);

  HssmModel& m = pm.model;
  m.state_dim = n;
  m.obs_dim = [n](int) { return n; };
  m.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  m.obs_noise = [n](const ParamVector& theta, int) {
    return Matrix(theta[0] * Matrix::Identity(n, n));
  };
  m.evolve = [](const Vector& x, const ParamVector&, int) { return x; };
  m.innovation = [n](const ParamVector&, int) { return Matrix::Zero(n, n); };
  m.transformation = ObsModel::identity();
  m.init_mean = Vector::Constant(n, mean);
  m.init_cov = CovFunction::powered_exp(pe_power, pe_scale).build_grid(n);
  m.forecast_independent = true;
  m.param_init.sample = [a, b](Rng& rng) {
    return ParamVector(Vector::Constant(1, rng.inv_gamma(a, b)), {"theta"});
  };
  m.param_init.log_density = [a, b](const ParamVector& t) {
    return invgamma_logpdf(t[0], a, b);
  };
  m.param_transition.sample = [a, b](const ParamVector&, int, Rng& rng) {
    return ParamVector(Vector::Constant(1, rng.inv_gamma(a, b)), {"theta"});
  };
  m.param_transition.log_density = [a, b](const ParamVector& cur, const ParamVector&,
                                          int) { return invgamma_logpdf(cur[0], a, b); };
  m.theta_fcd_filter = [a, b](const Vector&, const Vector& y, const Vector& x,
                              const ParamVector&, int, Rng& rng) {
    return ParamVector(
        Vector::Constant(1, rng.inv_gamma(a + 0.5 * y.size(),
                                          b + 0.5 * (y - x).squaredNorm())),
        {"theta"});
  };

  pm.default_horizon = 1;
  pm.default_taper = TaperSpec::identity_taper();
  pm.constants = {{"n", double(n)}, {"a", a}, {"b", b}, {"mean", mean}};
  return pm;
}

PaperModel build_sim_study(Config& cfg) {
  PaperModel pm;
  const Index n = static_cast<Index>(cfg.get("n", 100));
  const double mean = cfg.get("mean", 0.2);
  const double pe_power = cfg.get("pe_power", 1.8);
  const double pe_scale = cfg.get("pe_scale", 10.0);
  const double sigma = cfg.get("sigma", 0.2);
  const double kappa = cfg.get("kappa", 2.0);
  const Index m_obs = static_cast<Index>(cfg.get("m", 75));
  const double taper_len = cfg.get("taper_length", 20.0);

  HssmModel& m = pm.model;
  m.state_dim = n;
  m.obs_dim = [n](int) { return n; };
  m.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  // Scale-mixture noise diag(sigma^2 theta_l); an empty theta gives the
  // nominal Gaussian noise diag(sigma^2) used by the plain-EnKF baseline.
  m.obs_noise = [sigma](const ParamVector& theta, int t) -> Matrix {
    (void)t;
    if (theta.size() == 0) return Matrix();  // caller supplies dimension
    Vector d = sigma * sigma * theta.values();
    return Matrix(d.asDiagonal());
  };
  m.evolve = [](const Vector& x, const ParamVector&, int) { return x; };
  m.innovation = [n](const ParamVector&, int) { return Matrix::Zero(n, n); };
  m.transformation = ObsModel::scale_mixture_t(kappa, Vector::Constant(1, sigma));
  m.init_mean = Vector::Constant(n, mean);
  m.init_cov = CovFunction::powered_exp(pe_power, pe_scale).build_grid(n);
  m.forecast_independent = true;

  pm.default_horizon = 1;
  pm.default_taper = TaperSpec::grid(taper_len);
  pm.constants = {{"n", double(n)},   {"m", double(m_obs)}, {"mean", mean},
                  {"sigma", sigma},   {"kappa", kappa},     {"pe_power", pe_power},
                  {"pe_scale", pe_scale}, {"taper_length", taper_len}};
  return pm;
}

PaperModel build_cloud(Config& cfg) {
  PaperModel pm;
  const Index n = static_cast<Index>(cfg.get("n", 60));
  const int horizon = static_cast<int>(cfg.get("T", 80));
  const double g1 = cfg.get("gamma1", 0.3);
  const double g2 = cfg.get("gamma2", 0.3);
  const double g3 = cfg.get("gamma3", 0.3);
  const double sigma0 = cfg.get("sigma0", 0.1);
  const double tau0 = cfg.get("tau0", 1.5);
  const double lambda0 = cfg.get("lambda0", 8.0);
  const double rw_sd = cfg.get("rw_sd", 0.05);
  const double sigma2_floor = cfg.get("sigma2_floor", 1e-6);
  const double taper_range = cfg.get("taper_range", 8.0);

  HssmModel& m = pm.model;
  m.state_dim = n;
  m.obs_dim = [n](int) { return n; };
  m.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  m.obs_noise = [n, sigma2_floor](const ParamVector& theta, int) {
    const double s = std::exp(theta.get("log_sigma"));
    const double v = std::max(s * s, sigma2_floor);
    return Matrix(v * Matrix::Identity(n, n));
  };
  // Tridiagonal stencil applied directly (the dense operator is only built
  // where callers ask for the matrix itself).
  m.evolve = [n](const Vector& x, const ParamVector& theta, int) {
    const double g1 = theta[0], g2 = theta[1], g3 = theta[2];
    Vector out(n);
    for (Index i = 0; i < n; ++i) {
      double v = g1 * x(i);
      if (i + 1 < n) v += g2 * x(i + 1);
      if (i > 0) v += g3 * x(i - 1);
      out(i) = v;
    }
    return out;
  };
  m.innovation = [n](const ParamVector& theta, int) {
    const double tau = std::exp(theta.get("log_tau"));
    const double lambda = std::exp(theta.get("log_lambda"));
    return CovFunction::matern(lambda, tau * tau).build_grid(n);
  };
  m.transformation = ObsModel::poisson_log(3);

  const std::vector<std::string> names{"gamma1", "gamma2",  "gamma3",
                                       "log_sigma", "log_tau", "log_lambda"};
  Vector theta0(6);
  theta0 << g1, g2, g3, std::log(sigma0), std::log(tau0), std::log(lambda0);
  m.param_init.sample = [theta0, names](Rng&) { return ParamVector(theta0, names); };
  m.param_init.log_density = [theta0](const ParamVector& t) {
    return (t.values() - theta0).cwiseAbs().maxCoeff() == 0.0
               ? 0.0
               : -std::numeric_limits<double>::infinity();
  };
  m.param_transition.sample = [rw_sd](const ParamVector& prev, int, Rng& rng) {
    ParamVector out = prev;
    for (Index i = 0; i < out.size(); ++i) out[i] += rw_sd * rng.normal();
    return out;
  };
  m.param_transition.log_density = [rw_sd](const ParamVector& cur,
                                           const ParamVector& prev, int) {
    double acc = 0.0;
    for (Index i = 0; i < cur.size(); ++i) {
      const double r = (cur[i] - prev[i]) / rw_sd;
      acc += -0.5 * r * r - std::log(rw_sd) - 0.5 * std::log(2.0 * M_PI);
    }
    return acc;
  };
  m.init_mean = Vector::Constant(n, -2.0);
  m.init_cov = CovFunction::matern(5.0, 0.2).build_grid(n);
  m.forecast_independent = false;

  pm.default_horizon = horizon;
  pm.default_taper = TaperSpec::grid(taper_range);
  pm.constants = {{"n", double(n)},     {"T", double(horizon)}, {"m_observed", 54.0},
                  {"gamma1", g1},       {"gamma2", g2},         {"gamma3", g3},
                  {"sigma0", sigma0},   {"tau0", tau0},         {"lambda0", lambda0},
                  {"rw_sd", rw_sd},     {"taper_range", taper_range}};
  return pm;
}

PaperModel build_lorenz96(Config& cfg) {
  PaperModel pm;
  const Index n = static_cast<Index>(cfg.get("n", 40));
  const int horizon = static_cast<int>(cfg.get("T", 10));
  const double forcing = cfg.get("F", 8.0);
  const double delta = cfg.get("delta", 0.2);
  const int substeps = static_cast<int>(cfg.get("substeps", 40));
  const double q_scale = cfg.get("q_scale", 0.2);
  const double prior_mean = cfg.get("theta_prior_mean", 0.8);
  const double prior_sd = cfg.get("theta_prior_sd", 0.2);
  const int clim_burn = static_cast<int>(cfg.get("climatology_burn_in", 1000));
  const int clim_samples = static_cast<int>(cfg.get("climatology_samples", 50000));
  const auto clim_seed = static_cast<std::uint64_t>(cfg.get("climatology_seed", 20170301));
  const double taper_space = cfg.get("taper_space", 8.0);
  const double taper_lag = cfg.get("taper_lag", 3.0);

  const Matrix sigma_l = cached_climatology(n, forcing, delta, substeps, clim_burn,
                                            clim_samples, clim_seed);
  const Matrix q = q_scale * sigma_l;

  HssmModel& m = pm.model;
  m.state_dim = n;
  m.obs_dim = [n](int) { return n; };
  m.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  m.obs_noise = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  // The t=1 forecast prior is N(0, Sigma_L) itself: identity first step with
  // zero innovation, the scaled Lorenz map afterwards.
  m.evolve = [forcing, delta, substeps](const Vector& x, const ParamVector& theta,
                                        int t) {
    if (t <= 1) return x;
    return Vector(theta[0] * lorenz96_step(x, forcing, delta, substeps));
  };
  m.innovation = [n, q](const ParamVector&, int t) {
    if (t <= 1) return Matrix(Matrix::Zero(n, n));
    return q;
  };
  m.transformation = ObsModel::identity();
  m.init_mean = Vector::Zero(n);
  m.init_cov = sigma_l;
  m.forecast_independent = false;
  m.param_init.sample = [prior_mean, prior_sd](Rng& rng) {
    return ParamVector(Vector::Constant(1, prior_mean + prior_sd * rng.normal()),
                       {"theta"});
  };
  m.param_init.log_density = [prior_mean, prior_sd](const ParamVector& t) {
    const double r = (t[0] - prior_mean) / prior_sd;
    return -0.5 * r * r - std::log(prior_sd) - 0.5 * std::log(2.0 * M_PI);
  };
  m.param_transition.is_static = true;
  m.param_transition.sample = [](const ParamVector& prev, int, Rng&) { return prev; };
  m.theta_fcd_smoother = [q, prior_mean, prior_sd, forcing, delta, substeps](
                             const std::vector<Vector>&, const std::vector<Vector>&,
                             const std::vector<Vector>& x, Rng& rng) {
    const double theta =
        lorenz_theta_fcd(x, q, prior_mean, prior_sd, rng, forcing, delta, substeps);
    return std::vector<ParamVector>(
        x.size(), ParamVector(Vector::Constant(1, theta), {"theta"}));
  };

  pm.default_horizon = horizon;
  pm.default_taper = TaperSpec::circle(taper_space, n);
  pm.default_taper_lag = taper_lag;
  pm.constants = {{"n", double(n)},         {"T", double(horizon)},
                  {"F", forcing},           {"delta", delta},
                  {"substeps", double(substeps)}, {"q_scale", q_scale},
                  {"theta_prior_mean", prior_mean}, {"theta_prior_sd", prior_sd},
                  {"taper_space", taper_space},     {"taper_lag", taper_lag}};
  return pm;
}

}  // namespace

PaperModel build_paper_model(PaperModelName name,
                             const std::map<std::string, double>& overrides) {
  Config cfg(overrides);
  PaperModel pm;
  switch (name) {
    case PaperModelName::toy_example4:
      pm = build_toy_example4(cfg);
      break;
    case PaperModelName::sim_study:
      pm = build_sim_study(cfg);
      break;
    case PaperModelName::cloud:
      pm = build_cloud(cfg);
      break;
    case PaperModelName::lorenz96:
      pm = build_lorenz96(cfg);
      break;
  }
  cfg.finish();
  return pm;
}

}  // namespace henkf
