#include <doctest.h>

#include <cmath>
#include <set>
#include <henkf/builtin_models.hpp>
#include <henkf/genkf.hpp>
#include <henkf/penkf.hpp>

#include "support/kalman_oracle.hpp"
#include "support/test_util.hpp"

using namespace henkf;

TEST_CASE("genkf with degenerate layers equals one enkf update exactly") {
  Rng rng = stream(501, RngPhase::data);
  test::LinearGaussianModel lg;
  lg.transition = Matrix::Identity(3, 3);
  lg.innovation = 0.2 * Matrix::Identity(3, 3);
  lg.obs = Matrix::Identity(3, 3);
  lg.obs_noise = 0.5 * Matrix::Identity(3, 3);
  lg.mu0 = Vector::Zero(3);
  lg.sigma0 = Matrix::Identity(3, 3);
  HssmModel model = test::to_hssm(lg);
  model.forecast_independent = true;

  const Index chains = 25;
  const Matrix prev_x = sample_initial_ensemble(model, chains, 77);
  const Vector z = test::random_vector(3, rng);

  GenkfOptions opt;
  opt.sweeps = 1;
  opt.seed = 909;
  const GenkfState out =
      genkf_step(model, prev_x, std::vector<ParamVector>(chains, ParamVector::empty()),
                 std::nullopt, z, 1, opt);

  StateEnsemble filt{prev_x, 0, EnsembleKind::filtering};
  const StateEnsemble fore = enkf_forecast(model, filt, ParamVector::empty());
  const StateEnsemble upd = enkf_update(fore, z, model, ParamVector::empty(),
                                        TaperSpec::identity_taper(), 909);
  CHECK((out.x - upd.members).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("genkf matches an exact-conditional Gibbs oracle on the conjugate toy") {
  const PaperModel pm = build_paper_model(PaperModelName::toy_example4, {{"n", 10}});
  const HssmModel& model = pm.model;
  const Index n = 10;
  const double a = pm.constants.at("a"), b = pm.constants.at("b");

  // Simulated data at a prior-drawn noise variance.
  Rng drng = stream(503, RngPhase::data);
  const double theta_true = drng.inv_gamma(a, b);
  const Matrix prior_chol = Matrix(model.init_cov.llt().matrixL());
  const Vector x_true = mvn_sample(model.init_mean, prior_chol, drng);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y(i) = x_true(i) + std::sqrt(theta_true) * drng.normal();

  // Exact Gibbs: x | theta with the exact Gaussian conditional.
  Rng grng = stream(507, RngPhase::mcmc);
  const Matrix prior_prec = model.init_cov.inverse();
  double theta = 1.0;
  Vector x = model.init_mean;
  double theta_acc = 0.0;
  const int iters = 4000, burn = 500;
  for (int it = 0; it < iters; ++it) {
    Matrix prec = prior_prec + Matrix::Identity(n, n) / theta;
    const Matrix cov = prec.inverse();
    const Vector mean = cov * (prior_prec * model.init_mean + y / theta);
    x = mvn_sample(mean, psd_cholesky(cov), grng);
    theta = grng.inv_gamma(a + 0.5 * n, b + 0.5 * (y - x).squaredNorm());
    if (it >= burn) theta_acc += theta;
  }
  const double oracle_mean = theta_acc / (iters - burn);

  // GEnKF at a single time point.
  const Index chains = 500;
  const Matrix prev_x = sample_initial_ensemble(model, chains, 11);
  std::vector<ParamVector> prev_theta(chains, ParamVector::empty());
  for (Index i = 0; i < chains; ++i) {
    Rng trng = stream(11, RngPhase::init, 0, 1000000 + i);
    prev_theta[i] = model.param_init.sample(trng);
  }
  GenkfOptions opt;
  opt.sweeps = 20;
  opt.seed = 13;
  const GenkfState out = genkf_step(model, prev_x, prev_theta, std::nullopt, y, 1, opt);
  double genkf_mean = 0.0;
  for (const ParamVector& th : out.theta) genkf_mean += th[0];
  genkf_mean /= double(chains);

  CHECK(std::abs(genkf_mean - oracle_mean) < 0.10 * oracle_mean);
}

TEST_CASE("penkf matches a dense grid oracle on the conjugate toy") {
  const PaperModel pm = build_paper_model(PaperModelName::toy_example4, {{"n", 10}});
  const HssmModel& model = pm.model;
  const Index n = 10;
  const double a = pm.constants.at("a"), b = pm.constants.at("b");

  Rng drng = stream(509, RngPhase::data);
  const double theta_true = drng.inv_gamma(a, b);
  const Matrix prior_chol = Matrix(model.init_cov.llt().matrixL());
  const Vector x_true = mvn_sample(model.init_mean, prior_chol, drng);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y(i) = x_true(i) + std::sqrt(theta_true) * drng.normal();

  // Grid oracle over theta with the exact marginal N(y | mu, Sigma + theta I).
  const int grid = 2000;
  double num = 0.0, den = 0.0, num2 = 0.0;
  for (int g = 0; g < grid; ++g) {
    const double theta = 0.02 + 15.0 * (g + 0.5) / grid;
    const double logp =
        a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(theta) - b / theta +
        log_mvn_density(y, model.init_mean,
                        model.init_cov + theta * Matrix::Identity(n, n));
    const double w = std::exp(logp);
    num += theta * w;
    num2 += theta * theta * w;
    den += w;
  }
  const double oracle_mean = num / den;
  const double oracle_var = num2 / den - oracle_mean * oracle_mean;

  ParticleSystem system = penkf_init(model, 6000, 200, 21);
  PenkfOptions opt;
  opt.strategy = IntegrationStrategy::degenerate;
  opt.seed = 23;
  opt.resample_threshold = 0.0;  // keep raw importance weights for the check
  StepDiagnostics diag;
  system = penkf_step(model, system, y, 1, nullptr, opt, &diag);

  CHECK(std::abs(system.weights().sum() - 1.0) < 1e-10);
  double mean = 0.0, second = 0.0;
  for (const Particle& p : system.particles) {
    mean += p.weight * p.theta()[0];
    second += p.weight * p.theta()[0] * p.theta()[0];
  }
  const double var = second - mean * mean;
  CHECK(std::abs(mean - oracle_mean) < 0.10 * oracle_mean);
  CHECK(std::abs(var - oracle_var) < 0.10 * oracle_var);
}

namespace {

// Linear-Gaussian model with the observation-noise scale as the unknown
// parameter (forecast independent: theta appears in R only).
HssmModel noise_scale_model(Index n) {
  HssmModel m;
  m.state_dim = n;
  m.obs_dim = [n](int) { return n; };
  m.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  m.obs_noise = [n](const ParamVector& theta, int) {
    return Matrix(theta[0] * Matrix::Identity(n, n));
  };
  m.evolve = [](const Vector& x, const ParamVector&, int) { return Vector(0.9 * x); };
  m.innovation = [n](const ParamVector&, int) {
    return Matrix(0.3 * Matrix::Identity(n, n));
  };
  m.transformation = ObsModel::identity();
  m.init_mean = Vector::Zero(n);
  m.init_cov = Matrix::Identity(n, n);
  m.forecast_independent = true;
  m.param_init.sample = [](Rng& rng) {
    return ParamVector(Vector::Constant(1, rng.inv_gamma(3.0, 2.0)), {"theta"});
  };
  m.param_transition.sample = [](const ParamVector& prev, int, Rng&) { return prev; };
  m.param_transition.is_static = true;
  return m;
}

}  // namespace

TEST_CASE("forecast-independent path agrees with the general particle filter") {
  const HssmModel model = noise_scale_model(2);
  Rng drng = stream(521, RngPhase::data);
  std::vector<Vector> zs;
  Vector x = (Vector(2) << 0.5, -0.3).finished();
  for (int t = 1; t <= 4; ++t) {
    x = 0.9 * x;
    for (Index i = 0; i < 2; ++i) x(i) += std::sqrt(0.3) * drng.normal();
    Vector z = x;
    for (Index i = 0; i < 2; ++i) z(i) += std::sqrt(1.2) * drng.normal();
    zs.push_back(z);
  }

  PenkfOptions opt;
  opt.strategy = IntegrationStrategy::degenerate;
  opt.seed = 31;
  ParticleSystem general = penkf_init(model, 400, 30, 31);
  FiParticleSystem fast = penkf_init_fi(model, 400, 400, 33);
  PenkfOptions fast_opt = opt;
  fast_opt.seed = 33;
  for (int t = 1; t <= 4; ++t) {
    general = penkf_step(model, general, zs[t - 1], t, nullptr, opt);
    fast = penkf_step_fi(model, fast, zs[t - 1], t, nullptr, fast_opt);
  }
  double general_mean = 0.0;
  for (const Particle& p : general.particles) general_mean += p.weight * p.theta()[0];
  double fast_mean = 0.0;
  for (Index i = 0; i < fast.n_theta(); ++i)
    fast_mean += fast.weights[i] * fast.theta_paths[i]->value[0];
  // Both target the same filtering law; agreement within loose MC bounds.
  CHECK(std::abs(general_mean - fast_mean) < 0.25);
}

TEST_CASE("forecast-independent path with one parameter particle is a plain enkf") {
  const HssmModel model = noise_scale_model(3);
  Rng drng = stream(523, RngPhase::data);
  const Vector z = test::random_vector(3, drng);

  FiParticleSystem fast = penkf_init_fi(model, 1, 25, 41);
  const ParamVector theta = fast.theta_paths[0]->value;
  PenkfOptions opt;
  opt.strategy = IntegrationStrategy::degenerate;
  opt.seed = 43;
  const FiParticleSystem out = penkf_step_fi(model, fast, z, 1, nullptr, opt);

  StateEnsemble filt{sample_initial_ensemble(model, 25, 41), 0,
                     EnsembleKind::filtering};
  const StateEnsemble fore = enkf_forecast(model, filt, theta);
  const StateEnsemble upd =
      enkf_update(fore, z, model, theta, TaperSpec::identity_taper(), 43);
  CHECK((out.state.members - upd.members).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oversampled parameters evaluate the evolution once per member") {
  HssmModel model = noise_scale_model(2);
  auto counter = std::make_shared<int>(0);
  auto base_evolve = model.evolve;
  model.evolve = [counter, base_evolve](const Vector& x, const ParamVector& th, int t) {
    ++*counter;
    return base_evolve(x, th, t);
  };
  const Index n_members = 20, n_theta = 200;
  FiParticleSystem fast = penkf_init_fi(model, n_theta, n_members, 51);
  PenkfOptions opt;
  opt.strategy = IntegrationStrategy::degenerate;
  opt.seed = 53;
  Rng drng = stream(527, RngPhase::data);
  penkf_step_fi(model, fast, test::random_vector(2, drng), 1, nullptr, opt);
  CHECK(*counter == n_members);
}

TEST_CASE("resample closed cases") {
  ParticleSystem system;
  system.particles.resize(4);
  for (Index i = 0; i < 4; ++i) {
    system.particles[i].theta_path =
        extend_path(nullptr, ParamVector::scalar(double(i)));
    system.particles[i].weight = i == 2 ? 1.0 : 0.0;
  }
  Rng rng = stream(531, RngPhase::resample);
  const ParticleSystem out = resample(system, ResampleScheme::multinomial, rng);
  for (const Particle& p : out.particles) {
    CHECK(p.theta()[0] == 2.0);
    CHECK(p.weight == doctest::Approx(0.25));
  }

  // Uniform weights + systematic: every particle appears exactly once.
  for (Index i = 0; i < 4; ++i) system.particles[i].weight = 0.25;
  const ParticleSystem sys_out = resample(system, ResampleScheme::systematic, rng);
  std::set<double> seen;
  for (const Particle& p : sys_out.particles) seen.insert(p.theta()[0]);
  CHECK(seen.size() == 4);
}

TEST_CASE("resample copy counts follow the weights") {
  const Vector weights = (Vector(4) << 0.5, 0.5, 0.0, 0.0).finished();
  for (ResampleScheme scheme :
       {ResampleScheme::multinomial, ResampleScheme::systematic}) {
    Rng rng = stream(537, RngPhase::resample, 0,
                     scheme == ResampleScheme::multinomial ? 0 : 1);
    Vector counts = Vector::Zero(4);
    const int trials = 10000;
    for (int trial = 0; trial < trials; ++trial)
      for (Index pick : resample_indices(weights, scheme, rng)) counts(pick) += 1.0;
    CHECK(counts(2) == 0.0);
    CHECK(counts(3) == 0.0);
    // Expected copies 2 of 4 per trial; 3 sigma of the multinomial bound.
    const double expected = 2.0 * trials;
    const double sigma = std::sqrt(trials * 4 * 0.5 * 0.5);
    CHECK(std::abs(counts(0) - expected) < 3 * sigma);
    CHECK(std::abs(counts(1) - expected) < 3 * sigma);
  }
}

TEST_CASE("resample expected copies pass a chi-square check") {
  const Vector weights = (Vector(3) << 0.5, 0.3, 0.2).finished();
  Rng rng = stream(541, RngPhase::resample);
  Vector counts = Vector::Zero(3);
  const int trials = 10000, m = 3;
  for (int trial = 0; trial < trials; ++trial)
    for (Index pick : resample_indices(weights, ResampleScheme::multinomial, rng))
      counts(pick) += 1.0;
  double chi2 = 0.0;
  for (Index i = 0; i < 3; ++i) {
    const double expected = trials * m * weights(i);
    chi2 += (counts(i) - expected) * (counts(i) - expected) / expected;
  }
  CHECK(chi2 < 13.8);  // chi-square df 2 at p = 0.001
}

TEST_CASE("liu-west refresh preserves the first two weighted moments") {
  Rng rng = stream(547, RngPhase::refresh);
  const Index p = 2, m = 60;
  Matrix thetas = test::random_matrix(p, m, rng);
  thetas.row(1) = 2.0 * thetas.row(1).array() + 1.0;
  Vector weights(m);
  for (Index i = 0; i < m; ++i) weights(i) = rng.uniform() + 0.1;
  weights /= weights.sum();

  // h -> 0 keeps the particles.
  const Matrix frozen = liu_west_refresh(thetas, weights, 1e-9, rng);
  CHECK((frozen - thetas).cwiseAbs().maxCoeff() < 1e-6);

  const Vector mean = thetas * weights;
  Matrix cov = Matrix::Zero(p, p);
  for (Index i = 0; i < m; ++i) {
    const Vector d = thetas.col(i) - mean;
    cov += weights(i) * d * d.transpose();
  }

  Vector mean_acc = Vector::Zero(p);
  Matrix cov_acc = Matrix::Zero(p, p);
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    const Matrix refreshed = liu_west_refresh(thetas, weights, 0.4, rng);
    mean_acc += refreshed * weights;
    for (Index i = 0; i < m; ++i) {
      const Vector d = refreshed.col(i) - mean;
      cov_acc += weights(i) * d * d.transpose();
    }
  }
  mean_acc /= reps;
  cov_acc /= reps;
  CHECK((mean_acc - mean).cwiseAbs().maxCoeff() < 0.01);
  CHECK((cov_acc - cov).cwiseAbs().maxCoeff() < 0.05 * cov.cwiseAbs().maxCoeff());
}

TEST_CASE("earbpf agrees with penkf on a low-dimensional linear model") {
  const HssmModel model = noise_scale_model(1);
  Rng drng = stream(557, RngPhase::data);
  std::vector<Vector> zs;
  Vector x = Vector::Zero(1);
  for (int t = 1; t <= 3; ++t) {
    x = 0.9 * x;
    x(0) += std::sqrt(0.3) * drng.normal();
    Vector z = x;
    z(0) += std::sqrt(1.0) * drng.normal();
    zs.push_back(z);
  }
  PenkfOptions opt;
  opt.strategy = IntegrationStrategy::degenerate;
  opt.seed = 61;
  ParticleSystem penkf = penkf_init(model, 300, 400, 61);
  ParticleSystem earbpf = penkf_init(model, 300, 400, 63);
  PenkfOptions opt2 = opt;
  opt2.seed = 63;
  for (int t = 1; t <= 3; ++t) {
    penkf = penkf_step(model, penkf, zs[t - 1], t, nullptr, opt);
    earbpf = earbpf_step(model, earbpf, zs[t - 1], t, nullptr, opt2);
  }
  auto state_mean = [](const ParticleSystem& s) {
    double acc = 0.0;
    for (const Particle& p : s.particles)
      acc += p.weight * p.ens->members.row(0).mean();
    return acc;
  };
  CHECK(std::abs(state_mean(penkf) - state_mean(earbpf)) < 0.15);
}

TEST_CASE("earbpf member weights collapse in high dimensions") {
  // Random-walk state of dimension 50 with small member count: the member
  // ESS collapses below 2 in at least 90% of steps.
  const Index n = 50;
  HssmModel model;
  model.state_dim = n;
  model.obs_dim = [n](int) { return n; };
  model.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  model.obs_noise = [n](const ParamVector&, int) { return Matrix(Matrix::Identity(n, n)); };
  model.evolve = [](const Vector& x, const ParamVector&, int) { return x; };
  model.innovation = [n](const ParamVector&, int) {
    return Matrix(4.0 * Matrix::Identity(n, n));
  };
  model.transformation = ObsModel::identity();
  model.init_mean = Vector::Zero(n);
  model.init_cov = 4.0 * Matrix::Identity(n, n);
  model.param_init.sample = [](Rng&) { return ParamVector::scalar(1.0); };
  model.param_transition.sample = [](const ParamVector& prev, int, Rng&) { return prev; };
  model.param_transition.is_static = true;

  Rng drng = stream(563, RngPhase::data);
  ParticleSystem system = penkf_init(model, 4, 30, 67);
  PenkfOptions opt;
  opt.strategy = IntegrationStrategy::degenerate;
  opt.seed = 69;
  int collapsed = 0;
  const int steps = 10;
  for (int t = 1; t <= steps; ++t) {
    Vector z(n);
    for (Index i = 0; i < n; ++i) z(i) = 3.0 * drng.normal();
    StepDiagnostics diag;
    system = earbpf_step(model, system, z, t, nullptr, opt, &diag);
    if (diag.member_ess < 2.0) ++collapsed;
  }
  CHECK(collapsed >= 9);
}

TEST_CASE("normalized weights never exceed one") {
  const std::vector<double> logs{-1000.0, -1001.0, -950.0, -980.0};
  const std::vector<double> w = normalize_log_weights(logs);
  double total = 0.0;
  for (double x : w) {
    CHECK(x <= 1.0);
    total += x;
  }
  CHECK(std::abs(total - 1.0) < 1e-10);
  CHECK_THROWS_AS(normalize_log_weights(std::vector<double>(
                      3, -std::numeric_limits<double>::infinity())),
                  DegeneracyError);
}
