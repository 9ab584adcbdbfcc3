#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <henkf/builtin_models.hpp>
#include <henkf/mhenks.hpp>
#include <henkf/particle_gibbs.hpp>
#include <henkf/penks.hpp>
#include <henkf/theta_conditionals.hpp>

#include "support/kalman_oracle.hpp"
#include "support/test_util.hpp"

using namespace henkf;

namespace {

// x_t = theta * A x_{t-1} + w with a conjugate Gaussian prior on theta.
struct ScaledEvolutionSetup {
  HssmModel model;
  Matrix a;
  Matrix q;
  double prior_mean = 0.7;
  double prior_sd = 0.3;
};

ScaledEvolutionSetup scaled_evolution_model(Index n, Rng& rng) {
  ScaledEvolutionSetup setup;
  setup.a = 0.9 * Matrix::Identity(n, n) + 0.05 * test::random_matrix(n, n, rng);
  setup.q = 0.3 * Matrix::Identity(n, n) + 0.1 * test::random_spd(n, rng);

  HssmModel& m = setup.model;
  const Matrix a = setup.a, q = setup.q;
  m.state_dim = n;
  m.obs_dim = [n](int) { return n; };
  m.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  m.obs_noise = [n](const ParamVector&, int) {
    return Matrix(0.5 * Matrix::Identity(n, n));
  };
  m.evolve = [a](const Vector& x, const ParamVector& theta, int) {
    return Vector(theta[0] * (a * x));
  };
  m.innovation = [q](const ParamVector&, int) { return q; };
  m.transformation = ObsModel::identity();
  m.init_mean = Vector::Zero(n);
  m.init_cov = Matrix::Identity(n, n);
  const double pm = setup.prior_mean, ps = setup.prior_sd;
  m.param_init.sample = [pm, ps](Rng& r) {
    return ParamVector(Vector::Constant(1, pm + ps * r.normal()), {"theta"});
  };
  m.param_transition.is_static = true;
  m.param_transition.sample = [](const ParamVector& prev, int, Rng&) { return prev; };
  m.theta_fcd_smoother = [a, q, pm, ps](const std::vector<Vector>&,
                                        const std::vector<Vector>&,
                                        const std::vector<Vector>& x, Rng& r) {
    std::vector<Vector> xtilde, xt;
    for (std::size_t t = 1; t < x.size(); ++t) {
      xtilde.push_back(a * x[t - 1]);
      xt.push_back(x[t]);
    }
    const double theta = scalar_evolution_coeff_fcd(xtilde, xt, q, pm, ps, r);
    return std::vector<ParamVector>(
        x.size(), ParamVector(Vector::Constant(1, theta), {"theta"}));
  };
  return setup;
}

std::vector<Vector> simulate_scaled(const ScaledEvolutionSetup& setup, double theta,
                                    int horizon, Rng& rng) {
  test::LinearGaussianModel lg;
  lg.transition = theta * setup.a;
  lg.innovation = setup.q;
  lg.obs = Matrix::Identity(setup.model.state_dim, setup.model.state_dim);
  lg.obs_noise = setup.model.obs_noise(ParamVector::empty(), 1);
  lg.mu0 = setup.model.init_mean;
  lg.sigma0 = setup.model.init_cov;
  return test::simulate_linear(lg, horizon, rng);
}

}  // namespace

TEST_CASE("theta conditional closed form") {
  Rng rng = stream(601, RngPhase::data);

  SUBCASE("empty sums give a prior draw") {
    const auto [mean, var] =
        scalar_evolution_coeff_moments({}, {}, Matrix::Identity(2, 2), 0.8, 0.2);
    CHECK(mean == doctest::Approx(0.8));
    CHECK(var == doctest::Approx(0.04));
  }

  SUBCASE("noiseless regression recovers the coefficient") {
    const double theta_true = 1.3;
    std::vector<Vector> xtilde, x;
    for (int t = 0; t < 5; ++t) {
      xtilde.push_back(test::random_vector(3, rng));
      x.push_back(theta_true * xtilde.back());
    }
    const auto [mean, var] = scalar_evolution_coeff_moments(
        xtilde, x, Matrix::Identity(3, 3), 0.0, 1e6);
    CHECK(std::abs(mean - theta_true) < 1e-6);
    CHECK(var < 1.0);
  }

  SUBCASE("matches a stacked generalized-least-squares oracle") {
    const Index n = 3;
    const int terms = 4;
    const Matrix q = test::random_spd(n, rng);
    std::vector<Vector> xtilde, x;
    for (int t = 0; t < terms; ++t) {
      xtilde.push_back(test::random_vector(n, rng));
      x.push_back(0.9 * xtilde.back() + test::random_vector(n, rng));
    }
    const double mu = 0.5, sd = 0.4;
    // Stacked system: big covariance blockdiag(q), one regression column.
    Matrix omega = Matrix::Zero(n * terms, n * terms);
    Vector big_x(n * terms), big_y(n * terms);
    for (int t = 0; t < terms; ++t) {
      omega.block(n * t, n * t, n, n) = q;
      big_x.segment(n * t, n) = xtilde[t];
      big_y.segment(n * t, n) = x[t];
    }
    const Matrix omega_inv = omega.inverse();
    const double prec = 1.0 / (sd * sd) + big_x.dot(omega_inv * big_x);
    const double mean_oracle =
        (mu / (sd * sd) + big_x.dot(omega_inv * big_y)) / prec;
    const auto [mean, var] = scalar_evolution_coeff_moments(xtilde, x, q, mu, sd);
    CHECK(std::abs(mean - mean_oracle) < 1e-8);
    CHECK(std::abs(var - 1.0 / prec) < 1e-8);
  }
}

TEST_CASE("lorenz theta conditional at T = 1 is the prior") {
  Rng rng = stream(607, RngPhase::theta_fcd);
  const Matrix q = Matrix::Identity(40, 40);
  std::vector<double> draws;
  for (int r = 0; r < 4000; ++r) {
    const std::vector<Vector> traj{Vector::Constant(40, 2.0)};
    draws.push_back(lorenz_theta_fcd(traj, q, 0.8, 0.2, rng));
  }
  double mean = 0.0;
  for (double d : draws) mean += d;
  mean /= draws.size();
  double sd = 0.0;
  for (double d : draws) sd += (d - mean) * (d - mean);
  sd = std::sqrt(sd / (draws.size() - 1));
  CHECK(std::abs(mean - 0.8) < 0.02);
  CHECK(std::abs(sd - 0.2) < 0.02);
}

TEST_CASE("genks with a degenerate model draws one updated member") {
  Rng rng = stream(611, RngPhase::data);
  test::LinearGaussianModel lg;
  lg.transition = Matrix::Identity(2, 2);
  lg.innovation = 0.3 * Matrix::Identity(2, 2);
  lg.obs = Matrix::Identity(2, 2);
  lg.obs_noise = 0.4 * Matrix::Identity(2, 2);
  lg.mu0 = Vector::Zero(2);
  lg.sigma0 = Matrix::Identity(2, 2);
  const HssmModel model = test::to_hssm(lg);
  const Vector z = test::random_vector(2, rng);

  GenksOptions opt;
  opt.n_members = 12;
  opt.iterations = 3;
  opt.burn_in = 0;
  opt.lag = 1;
  opt.seed = 71;
  const SmootherDraws draws = genks_run(model, {z}, opt);
  REQUIRE(draws.draws.size() == 3);

  // Iteration 1 must return one column of the equivalent single EnKS run.
  EnksOptions enks_opt;
  enks_opt.n_members = 12;
  enks_opt.lag = 1;
  enks_opt.seed = genks_iteration_seed(71, 1);
  const EnksResult enks =
      enks_run(model, {z}, std::vector<ParamVector>(1, ParamVector()), enks_opt);
  bool found = false;
  for (Index j = 0; j < 12; ++j)
    if ((enks.smoothed[0].members.col(j) - draws.draws[0].x[0]).cwiseAbs().maxCoeff() ==
        0.0)
      found = true;
  CHECK(found);
}

TEST_CASE("genks member pick is uniform") {
  test::LinearGaussianModel lg;
  lg.transition = Matrix::Identity(1, 1);
  lg.innovation = 0.1 * Matrix::Identity(1, 1);
  lg.obs = Matrix::Identity(1, 1);
  lg.obs_noise = Matrix::Identity(1, 1);
  lg.mu0 = Vector::Zero(1);
  lg.sigma0 = Matrix::Identity(1, 1);
  const HssmModel model = test::to_hssm(lg);

  const Index n_members = 10;
  GenksOptions opt;
  opt.n_members = n_members;
  opt.iterations = 10000;
  opt.burn_in = 0;
  opt.lag = 1;
  opt.seed = 73;
  const SmootherDraws draws = genks_run(model, {Vector::Zero(1)}, opt);

  // Recover which member was picked per iteration by matching columns.
  std::vector<int> counts(n_members, 0);
  for (int it = 1; it <= opt.iterations; ++it) {
    EnksOptions enks_opt;
    enks_opt.n_members = n_members;
    enks_opt.lag = 1;
    enks_opt.seed = genks_iteration_seed(73, it);
    const EnksResult enks = enks_run(model, {Vector::Zero(1)},
                                     std::vector<ParamVector>(1, ParamVector()),
                                     enks_opt);
    for (Index j = 0; j < n_members; ++j)
      if (enks.smoothed[0].members(0, j) == draws.draws[it - 1].x[0](0)) {
        ++counts[j];
        break;
      }
  }
  const double expected = opt.iterations / double(n_members);
  const double se = std::sqrt(opt.iterations * (1.0 / n_members) *
                              (1.0 - 1.0 / n_members));
  for (int j = 0; j < n_members; ++j)
    CHECK(std::abs(counts[j] - expected) < 3 * se + 1);
}

TEST_CASE("genks posterior matches an FFBS Gibbs oracle") {
  Rng rng = stream(617, RngPhase::data);
  ScaledEvolutionSetup setup = scaled_evolution_model(4, rng);
  const double theta_true = 0.85;
  const std::vector<Vector> ys = simulate_scaled(setup, theta_true, 5, rng);

  // Exact Gibbs: FFBS for x | theta, conjugate draw for theta | x.
  Rng grng = stream(619, RngPhase::mcmc);
  double theta = 0.5;
  double acc = 0.0;
  const int iters = 3000, burn = 500;
  for (int it = 0; it < iters; ++it) {
    test::LinearGaussianModel lg;
    lg.transition = theta * setup.a;
    lg.innovation = setup.q;
    lg.obs = Matrix::Identity(4, 4);
    lg.obs_noise = setup.model.obs_noise(ParamVector::empty(), 1);
    lg.mu0 = setup.model.init_mean;
    lg.sigma0 = setup.model.init_cov;
    const std::vector<Vector> x = test::ffbs_sample(lg, ys, grng);
    std::vector<Vector> xtilde, xt;
    for (std::size_t t = 1; t < x.size(); ++t) {
      xtilde.push_back(setup.a * x[t - 1]);
      xt.push_back(x[t]);
    }
    theta = scalar_evolution_coeff_fcd(xtilde, xt, setup.q, setup.prior_mean,
                                       setup.prior_sd, grng);
    if (it >= burn) acc += theta;
  }
  const double oracle_mean = acc / (iters - burn);

  GenksOptions opt;
  opt.n_members = 60;
  opt.iterations = 600;
  opt.burn_in = 100;
  opt.lag = 5;
  opt.lag_taper_radius = -1;
  opt.seed = 79;
  opt.theta_init = ParamVector(Vector::Constant(1, 0.5), {"theta"});
  const SmootherDraws draws = genks_run(setup.model, ys, opt);
  const std::vector<double> samples = draws.theta_samples(0);
  double genks_mean = 0.0;
  for (double s : samples) genks_mean += s;
  genks_mean /= samples.size();
  CHECK(std::abs(genks_mean - oracle_mean) < 0.10 * std::abs(oracle_mean));
}

TEST_CASE("mhenks chain is invariant to a constant loglikelihood offset") {
  Rng rng = stream(631, RngPhase::data);
  ScaledEvolutionSetup setup = scaled_evolution_model(2, rng);
  const std::vector<Vector> ys = simulate_scaled(setup, 0.8, 4, rng);

  MhenksOptions opt;
  opt.n_members = 40;
  opt.iterations = 60;
  opt.burn_in = 10;
  opt.proposal_sd = 0.2;
  opt.seed = 83;
  opt.theta_init = ParamVector(Vector::Constant(1, 0.7), {"theta"});
  opt.log_prior = [&](const ParamVector& th) {
    const double r = (th[0] - setup.prior_mean) / setup.prior_sd;
    return -0.5 * r * r;
  };
  const MhenksResult base = mhenks_run(setup.model, ys, opt);
  opt.loglik_offset_per_step = 250.0;
  const MhenksResult offset = mhenks_run(setup.model, ys, opt);
  REQUIRE(base.chain.size() == offset.chain.size());
  for (std::size_t i = 0; i < base.chain.size(); ++i)
    CHECK(base.chain[i][0] == offset.chain[i][0]);
}

TEST_CASE("mhenks agrees with an exact-likelihood sampler in total variation") {
  Rng rng = stream(641, RngPhase::data);
  ScaledEvolutionSetup setup = scaled_evolution_model(2, rng);
  const int horizon = 5;
  const std::vector<Vector> ys = simulate_scaled(setup, 0.9, horizon, rng);

  MhenksOptions opt;
  opt.n_members = 1500;
  opt.iterations = 3000;
  opt.burn_in = 300;
  opt.proposal_sd = 0.15;
  opt.seed = 89;
  opt.theta_init = ParamVector(Vector::Constant(1, 0.7), {"theta"});
  opt.log_prior = [&](const ParamVector& th) {
    const double r = (th[0] - setup.prior_mean) / setup.prior_sd;
    return -0.5 * r * r;
  };
  const MhenksResult ensemble_chain = mhenks_run(setup.model, ys, opt);

  // Exact-likelihood chain under the same proposal and uniform streams.
  std::vector<double> exact_chain;
  double theta = 0.7;
  auto exact_loglik = [&](double th) {
    test::LinearGaussianModel lg;
    lg.transition = th * setup.a;
    lg.innovation = setup.q;
    lg.obs = Matrix::Identity(2, 2);
    lg.obs_noise = setup.model.obs_noise(ParamVector::empty(), 1);
    lg.mu0 = setup.model.init_mean;
    lg.sigma0 = setup.model.init_cov;
    return test::kalman_filter(lg, ys).loglik;
  };
  auto log_prior = [&](double th) {
    const double r = (th - setup.prior_mean) / setup.prior_sd;
    return -0.5 * r * r;
  };
  for (int it = 1; it <= opt.iterations; ++it) {
    Rng prop_rng = stream(opt.seed, RngPhase::proposal, it);
    const double proposal = theta + opt.proposal_sd * prop_rng.normal();
    const double log_alpha = exact_loglik(proposal) + log_prior(proposal) -
                             exact_loglik(theta) - log_prior(theta);
    Rng u_rng = stream(opt.seed, RngPhase::mcmc, it);
    if (std::log(std::max(u_rng.uniform(), 1e-300)) < log_alpha) theta = proposal;
    exact_chain.push_back(theta);
  }

  // Histogram total-variation distance over the pooled range.
  std::vector<double> a, b;
  for (int it = opt.burn_in; it < opt.iterations; ++it) {
    a.push_back(ensemble_chain.chain[it][0]);
    b.push_back(exact_chain[it]);
  }
  const double lo = std::min(*std::min_element(a.begin(), a.end()),
                             *std::min_element(b.begin(), b.end()));
  const double hi = std::max(*std::max_element(a.begin(), a.end()),
                             *std::max_element(b.begin(), b.end()));
  const int bins = 20;
  std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
  for (double v : a)
    pa[std::min<int>(bins - 1, int((v - lo) / (hi - lo) * bins))] += 1.0 / a.size();
  for (double v : b)
    pb[std::min<int>(bins - 1, int((v - lo) / (hi - lo) * bins))] += 1.0 / b.size();
  double tv = 0.0;
  for (int k = 0; k < bins; ++k) tv += std::abs(pa[k] - pb[k]);
  tv /= 2.0;
  CHECK(tv <= 0.1);
  CHECK(ensemble_chain.acceptance_rate > 0.05);
}

TEST_CASE("penks with T = 1 equals one particle filter step") {
  const PaperModel pm = build_paper_model(PaperModelName::toy_example4, {{"n", 4}});
  Rng rng = stream(643, RngPhase::data);
  const Vector z = test::random_vector(4, rng);

  PenksOptions opt;
  opt.n_particles = 50;
  opt.n_members = 20;
  opt.step.strategy = IntegrationStrategy::degenerate;
  opt.step.seed = 91;
  opt.step.resample_threshold = 0.5;
  const PenksResult smoother = penks_run(pm.model, {z}, nullptr, opt);

  ParticleSystem filter = penkf_init(pm.model, 50, 20, 91);
  PenkfOptions fopt = opt.step;
  fopt.store_history = true;
  filter = penkf_step(pm.model, filter, z, 1, nullptr, fopt);
  REQUIRE(smoother.system.size() == filter.size());
  for (Index i = 0; i < filter.size(); ++i) {
    CHECK(smoother.system.particles[i].weight == filter.particles[i].weight);
    CHECK((smoother.system.particles[i].ens->members -
           filter.particles[i].ens->members)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("penks ancestor diversity is non-increasing over time") {
  Rng rng = stream(647, RngPhase::data);
  ScaledEvolutionSetup setup = scaled_evolution_model(2, rng);
  // Random-walk parameters so resampling keeps firing.
  setup.model.param_transition.is_static = false;
  setup.model.param_transition.sample = [](const ParamVector& prev, int, Rng& r) {
    ParamVector out = prev;
    out[0] += 0.05 * r.normal();
    return out;
  };
  setup.model.param_transition.log_density = [](const ParamVector& cur,
                                                const ParamVector& prev, int) {
    const double d = (cur[0] - prev[0]) / 0.05;
    return -0.5 * d * d;
  };
  const std::vector<Vector> ys = simulate_scaled(setup, 0.9, 10, rng);

  PenksOptions opt;
  opt.n_particles = 60;
  opt.n_members = 12;
  opt.step.strategy = IntegrationStrategy::degenerate;
  opt.step.seed = 97;
  opt.step.resample_threshold = 0.8;
  const PenksResult out = penks_run(setup.model, ys, nullptr, opt);
  for (std::size_t t = 1; t < out.diagnostics.size(); ++t)
    CHECK(out.diagnostics[t].unique_particles <=
          out.diagnostics[t - 1].unique_particles);
  // Trajectory weights equal the final filter weights by construction.
  CHECK(std::abs(out.system.weights().sum() - 1.0) < 1e-10);
  REQUIRE(out.system.particles[0].state_history.size() == 10);
}

TEST_CASE("penks smoothed parameter matches a dense-grid oracle") {
  // Static scalar noise parameter on a 1-D linear model.
  HssmModel model;
  model.state_dim = 1;
  model.obs_dim = [](int) { return Index(1); };
  model.obs_matrix = [](const ParamVector&, int) { return Matrix::Identity(1, 1); };
  model.obs_noise = [](const ParamVector& theta, int) {
    return Matrix(theta[0] * Matrix::Identity(1, 1));
  };
  model.evolve = [](const Vector& x, const ParamVector&, int) { return Vector(0.9 * x); };
  model.innovation = [](const ParamVector&, int) {
    return Matrix(0.3 * Matrix::Identity(1, 1));
  };
  model.transformation = ObsModel::identity();
  model.init_mean = Vector::Zero(1);
  model.init_cov = Matrix::Identity(1, 1);
  model.param_init.sample = [](Rng& rng) {
    return ParamVector(Vector::Constant(1, rng.inv_gamma(3.0, 2.0)), {"theta"});
  };
  model.param_transition.is_static = true;
  model.param_transition.sample = [](const ParamVector& prev, int, Rng&) { return prev; };

  Rng drng = stream(653, RngPhase::data);
  const int horizon = 5;
  std::vector<Vector> zs;
  {
    Vector x = Vector::Zero(1);
    for (int t = 1; t <= horizon; ++t) {
      x = 0.9 * x;
      x(0) += std::sqrt(0.3) * drng.normal();
      Vector z = x;
      z(0) += std::sqrt(1.1) * drng.normal();
      zs.push_back(z);
    }
  }

  // Grid oracle with the exact Kalman likelihood per theta.
  const int grid = 2000;
  double num = 0.0, den = 0.0;
  for (int g = 0; g < grid; ++g) {
    const double theta = 0.02 + 12.0 * (g + 0.5) / grid;
    test::LinearGaussianModel lg;
    lg.transition = 0.9 * Matrix::Identity(1, 1);
    lg.innovation = 0.3 * Matrix::Identity(1, 1);
    lg.obs = Matrix::Identity(1, 1);
    lg.obs_noise = theta * Matrix::Identity(1, 1);
    lg.mu0 = Vector::Zero(1);
    lg.sigma0 = Matrix::Identity(1, 1);
    const double logp = 3.0 * std::log(2.0) - std::lgamma(3.0) -
                        4.0 * std::log(theta) - 2.0 / theta +
                        test::kalman_filter(lg, zs).loglik;
    const double w = std::exp(logp);
    num += theta * w;
    den += w;
  }
  const double oracle_mean = num / den;

  PenksOptions opt;
  opt.n_particles = 3000;
  opt.n_members = 500;
  opt.step.strategy = IntegrationStrategy::degenerate;
  opt.step.seed = 101;
  opt.step.resample_threshold = 0.0;  // importance weighting of prior draws
  const PenksResult out = penks_run(model, zs, nullptr, opt);

  double mean = 0.0, second = 0.0;
  for (const Particle& p : out.system.particles) {
    mean += p.weight * p.theta()[0];
    second += p.weight * p.theta()[0] * p.theta()[0];
  }
  const double sd = std::sqrt(std::max(second - mean * mean, 0.0));
  const double se = sd / std::sqrt(out.system.ess());
  CHECK(std::abs(mean - oracle_mean) < 3 * se + 0.05);

  // Static parameter: every path entry matches the head value.
  const auto path = path_values(out.system.particles[0].theta_path);
  for (const ParamVector& th : path)
    CHECK(th[0] == path.back()[0]);
}

TEST_CASE("particle gibbs matches the FFBS oracle for large particle counts") {
  Rng rng = stream(659, RngPhase::data);
  ScaledEvolutionSetup setup = scaled_evolution_model(1, rng);
  const std::vector<Vector> ys = simulate_scaled(setup, 0.9, 5, rng);

  // FFBS-Gibbs oracle.
  Rng grng = stream(661, RngPhase::mcmc);
  double theta = 0.5, acc = 0.0;
  const int iters = 3000, burn = 500;
  for (int it = 0; it < iters; ++it) {
    test::LinearGaussianModel lg;
    lg.transition = theta * setup.a;
    lg.innovation = setup.q;
    lg.obs = Matrix::Identity(1, 1);
    lg.obs_noise = setup.model.obs_noise(ParamVector::empty(), 1);
    lg.mu0 = setup.model.init_mean;
    lg.sigma0 = setup.model.init_cov;
    const std::vector<Vector> x = test::ffbs_sample(lg, ys, grng);
    std::vector<Vector> xtilde, xt;
    for (std::size_t t = 1; t < x.size(); ++t) {
      xtilde.push_back(setup.a * x[t - 1]);
      xt.push_back(x[t]);
    }
    theta = scalar_evolution_coeff_fcd(xtilde, xt, setup.q, setup.prior_mean,
                                       setup.prior_sd, grng);
    if (it >= burn) acc += theta;
  }
  const double oracle_mean = acc / (iters - burn);

  ParticleGibbsOptions opt;
  opt.n_particles = 2000;
  opt.iterations = 400;
  opt.burn_in = 100;
  opt.seed = 103;
  opt.theta_init = ParamVector(Vector::Constant(1, 0.5), {"theta"});
  const ParticleGibbsResult out = particle_gibbs_run(setup.model, ys, opt);
  const std::vector<double> samples = out.draws.theta_samples(0);
  double pg_mean = 0.0;
  for (double s : samples) pg_mean += s;
  pg_mean /= samples.size();
  CHECK(std::abs(pg_mean - oracle_mean) < 0.10 * std::abs(oracle_mean));
}

TEST_CASE("particle gibbs lineages collapse on the lorenz geometry") {
  const PaperModel pm = build_paper_model(
      PaperModelName::lorenz96, {{"climatology_samples", 5000}, {"T", 10}});
  Rng drng = stream(667, RngPhase::data);
  // Synthetic trajectory from the model itself.
  std::vector<Vector> zs;
  {
    const Matrix chol = psd_cholesky(pm.model.init_cov, "S");
    const Matrix qchol = psd_cholesky(0.2 * pm.model.init_cov, "Q");
    Vector x = mvn_sample(pm.model.init_mean, chol, drng);
    const ParamVector theta = ParamVector(Vector::Constant(1, 0.8), {"theta"});
    for (int t = 1; t <= 10; ++t) {
      x = pm.model.evolve(x, theta, t);
      if (t >= 2) x = mvn_sample(x, qchol, drng);
      Vector z = x;
      for (Index i = 0; i < 40; ++i) z(i) += drng.normal();
      zs.push_back(z);
    }
  }
  ParticleGibbsOptions opt;
  opt.n_particles = 50;
  opt.iterations = 30;
  opt.burn_in = 0;
  opt.seed = 107;
  opt.theta_init = ParamVector(Vector::Constant(1, 0.5), {"theta"});
  const ParticleGibbsResult out = particle_gibbs_run(pm.model, zs, opt);
  int collapsed = 0;
  for (int u : out.unique_first_ancestors)
    if (u <= 2) ++collapsed;
  CHECK(collapsed >= 27);  // collapse in at least 90% of iterations
}

TEST_CASE("mcmc composition with one gibbs block equals genks exactly") {
  Rng rng = stream(673, RngPhase::data);
  ScaledEvolutionSetup setup = scaled_evolution_model(2, rng);
  const std::vector<Vector> ys = simulate_scaled(setup, 0.8, 4, rng);

  GenksOptions opt;
  opt.n_members = 20;
  opt.iterations = 15;
  opt.burn_in = 5;
  opt.lag = 4;
  opt.seed = 109;
  opt.theta_init = ParamVector(Vector::Constant(1, 0.6), {"theta"});
  const SmootherDraws a = genks_run(setup.model, ys, opt);

  McmcBlock block;
  block.kind = McmcBlock::Kind::gibbs_fcd;
  block.components = {0};
  const SmootherDraws b = mcmc_enks_compose(setup.model, ys, {block}, opt);
  REQUIRE(a.draws.size() == b.draws.size());
  for (std::size_t it = 0; it < a.draws.size(); ++it) {
    CHECK(a.draws[it].theta[0][0] == b.draws[it].theta[0][0]);
    CHECK((a.draws[it].x[0] - b.draws[it].x[0]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mcmc composition rejects overlapping blocks") {
  Rng rng = stream(677, RngPhase::data);
  ScaledEvolutionSetup setup = scaled_evolution_model(2, rng);
  const std::vector<Vector> ys = simulate_scaled(setup, 0.8, 2, rng);
  McmcBlock b1, b2;
  b1.components = {0};
  b2.components = {0};
  b1.fcd = b2.fcd = [](const std::vector<Vector>&, const std::vector<Vector>&,
                       const std::vector<Vector>& x, const std::vector<ParamVector>& cur,
                       Rng&) { return cur; };
  GenksOptions opt;
  opt.iterations = 1;
  opt.theta_init = ParamVector(Vector::Constant(1, 0.6), {"theta"});
  CHECK_THROWS_AS(mcmc_enks_compose(setup.model, ys, {b1, b2}, opt), ConfigError);
}

TEST_CASE("two-block composition matches an exact conjugate Gibbs oracle") {
  // x_t = theta2 A x_{t-1} + w, w ~ N(0, theta1 Q0): theta1 via its inverse-
  // gamma conditional (gibbs block), theta2 via a random-walk move (mh block).
  Rng rng = stream(683, RngPhase::data);
  const Index n = 4;
  const int horizon = 5;
  const Matrix a = 0.9 * Matrix::Identity(n, n) + 0.05 * test::random_matrix(n, n, rng);
  const Matrix q0 = 0.4 * Matrix::Identity(n, n);
  const double ig_a = 3.0, ig_b = 2.0;
  const double t2_mean = 0.8, t2_sd = 0.3;

  HssmModel model;
  model.state_dim = n;
  model.obs_dim = [n](int) { return n; };
  model.obs_matrix = [n](const ParamVector&, int) { return Matrix::Identity(n, n); };
  model.obs_noise = [n](const ParamVector&, int) {
    return Matrix(0.5 * Matrix::Identity(n, n));
  };
  model.evolve = [a](const Vector& x, const ParamVector& theta, int) {
    return Vector(theta[1] * (a * x));
  };
  model.innovation = [q0](const ParamVector& theta, int) {
    return Matrix(theta[0] * q0);
  };
  model.transformation = ObsModel::identity();
  model.init_mean = Vector::Zero(n);
  model.init_cov = Matrix::Identity(n, n);
  model.param_transition.is_static = true;
  model.param_transition.sample = [](const ParamVector& prev, int, Rng&) { return prev; };
  model.param_init.sample = [=](Rng& r) {
    Vector v(2);
    v << r.inv_gamma(ig_a, ig_b), t2_mean + t2_sd * r.normal();
    return ParamVector(v, {"qscale", "evo"});
  };

  // Simulated data at fixed truth.
  const double theta1_true = 0.7, theta2_true = 0.9;
  std::vector<Vector> ys;
  {
    test::LinearGaussianModel lg;
    lg.transition = theta2_true * a;
    lg.innovation = theta1_true * q0;
    lg.obs = Matrix::Identity(n, n);
    lg.obs_noise = 0.5 * Matrix::Identity(n, n);
    lg.mu0 = Vector::Zero(n);
    lg.sigma0 = Matrix::Identity(n, n);
    Rng drng = stream(691, RngPhase::data);
    ys = test::simulate_linear(lg, horizon, drng);
  }

  auto theta1_fcd = [&](const std::vector<Vector>& x, double theta2, Rng& r) {
    // w_t = x_t - theta2 A x_{t-1}, t = 2..T (t = 1 has unit prior cov).
    double rss = 0.0;
    int terms = 0;
    const Matrix q0_inv = q0.inverse();
    for (std::size_t t = 1; t < x.size(); ++t) {
      const Vector w = x[t] - theta2 * (a * x[t - 1]);
      rss += w.dot(q0_inv * w);
      terms += static_cast<int>(n);
    }
    return r.inv_gamma(ig_a + 0.5 * terms, ig_b + 0.5 * rss);
  };

  // Exact conjugate Gibbs oracle (FFBS + both conditionals).
  double o1 = 0.0, o2 = 0.0;
  {
    Rng grng = stream(697, RngPhase::mcmc);
    double theta1 = 1.0, theta2 = 0.6;
    const int iters = 3000, burn = 500;
    for (int it = 0; it < iters; ++it) {
      test::LinearGaussianModel lg;
      lg.transition = theta2 * a;
      lg.innovation = theta1 * q0;
      lg.obs = Matrix::Identity(n, n);
      lg.obs_noise = 0.5 * Matrix::Identity(n, n);
      lg.mu0 = Vector::Zero(n);
      lg.sigma0 = Matrix::Identity(n, n);
      const std::vector<Vector> x = test::ffbs_sample(lg, ys, grng);
      theta1 = theta1_fcd(x, theta2, grng);
      std::vector<Vector> xtilde, xt;
      for (std::size_t t = 1; t < x.size(); ++t) {
        xtilde.push_back(a * x[t - 1]);
        xt.push_back(x[t]);
      }
      theta2 = scalar_evolution_coeff_fcd(xtilde, xt, theta1 * q0, t2_mean, t2_sd,
                                          grng);
      if (it >= burn) {
        o1 += theta1;
        o2 += theta2;
      }
    }
    o1 /= (iters - burn);
    o2 /= (iters - burn);
  }

  McmcBlock gibbs_block;
  gibbs_block.kind = McmcBlock::Kind::gibbs_fcd;
  gibbs_block.components = {0};
  gibbs_block.fcd = [&](const std::vector<Vector>&, const std::vector<Vector>&,
                        const std::vector<Vector>& x,
                        const std::vector<ParamVector>& cur, Rng& r) {
    const double theta1 = theta1_fcd(x, cur[0][1], r);
    std::vector<ParamVector> out = cur;
    for (ParamVector& th : out) th[0] = theta1;
    return out;
  };
  McmcBlock mh_block;
  mh_block.kind = McmcBlock::Kind::mh;
  mh_block.components = {1};
  mh_block.proposal_sd = 0.08;
  mh_block.log_prior = [=](double v) {
    const double r = (v - t2_mean) / t2_sd;
    return -0.5 * r * r;
  };

  GenksOptions opt;
  opt.n_members = 80;
  opt.iterations = 500;
  opt.burn_in = 100;
  opt.lag = horizon;
  opt.lag_taper_radius = -1;
  opt.seed = 127;
  Vector init(2);
  init << 1.0, 0.6;
  opt.theta_init = ParamVector(init, {"qscale", "evo"});
  const SmootherDraws draws =
      mcmc_enks_compose(model, ys, {gibbs_block, mh_block}, opt);
  double m1 = 0.0, m2 = 0.0;
  int count = 0;
  for (std::size_t it = opt.burn_in; it < draws.draws.size(); ++it) {
    m1 += draws.draws[it].theta[0][0];
    m2 += draws.draws[it].theta[0][1];
    ++count;
  }
  m1 /= count;
  m2 /= count;
  CHECK(std::abs(m1 - o1) < 0.10 * std::abs(o1));
  CHECK(std::abs(m2 - o2) < 0.10 * std::abs(o2));
}
