#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <henkf/obs_models.hpp>
#include <henkf/stats.hpp>

#include "support/test_util.hpp"

using namespace henkf;

TEST_CASE("scale-mixture FCD closed form at zero residual") {
  // residual 0 -> IG(a + 1/2, b); check through E[1/theta] = (a + 1/2) / b.
  const double a = 2.0, b = 3.0;
  Rng rng = stream(101, RngPhase::obs_fcd);
  const Vector y = Vector::Constant(4, 1.5), hx = y;
  const Vector sigma = Vector::Constant(1, 0.2);
  double acc = 0.0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r)
    acc += (1.0 / sample_scale_params_fcd(y, hx, sigma, a, b, rng).array()).mean();
  const double mean_inv = acc / reps;
  const double truth = (a + 0.5) / b;
  const double se = truth / std::sqrt(4.0 * reps);  // crude but conservative
  CHECK(std::abs(mean_inv - truth) < 5 * se);
}

TEST_CASE("scale-mixture FCD grows stochastically with the residual") {
  Rng rng = stream(103, RngPhase::obs_fcd);
  const Vector sigma = Vector::Constant(1, 1.0);
  const Vector hx = Vector::Zero(1);
  double small_mean = 0.0, large_mean = 0.0;
  for (int r = 0; r < 1000; ++r) {
    small_mean +=
        sample_scale_params_fcd(Vector::Constant(1, 0.1), hx, sigma, 2.0, 2.0, rng)(0);
    large_mean +=
        sample_scale_params_fcd(Vector::Constant(1, 5.0), hx, sigma, 2.0, 2.0, rng)(0);
  }
  CHECK(large_mean > small_mean);
}

TEST_CASE("scale-mixture FCD with kappa = 2 matches IG(1.5, 2)") {
  // a = b = kappa/2 = 1 and residual^2/sigma^2 = 2 -> IG(1.5, 2); check the
  // reciprocal mean a'/b' = 0.75.
  Rng rng = stream(107, RngPhase::obs_fcd);
  const Vector y = Vector::Constant(1, std::sqrt(2.0)), hx = Vector::Zero(1);
  const Vector sigma = Vector::Constant(1, 1.0);
  double acc = 0.0;
  const int reps = 40000;
  for (int r = 0; r < reps; ++r)
    acc += 1.0 / sample_scale_params_fcd(y, hx, sigma, 1.0, 1.0, rng)(0);
  CHECK(std::abs(acc / reps - 0.75) < 0.02);
}

TEST_CASE("scale mixture of normals composes to the t distribution") {
  // theta ~ IG(kappa/2, kappa/2), z | theta ~ N(0, theta): KS distance of
  // composed draws to the t_2 CDF below 0.01.
  const double kappa = 2.0;
  Rng rng = stream(109, RngPhase::obs_fcd);
  const int n = 100000;
  std::vector<double> draws(n);
  for (int i = 0; i < n; ++i) {
    const double theta = rng.inv_gamma(kappa / 2.0, kappa / 2.0);
    draws[i] = std::sqrt(theta) * rng.normal();
  }
  std::sort(draws.begin(), draws.end());
  auto t2_cdf = [](double t) { return 0.5 + t / (2.0 * std::sqrt(2.0 + t * t)); };
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = t2_cdf(draws[i]);
    ks = std::max(ks, std::abs(f - double(i) / n));
    ks = std::max(ks, std::abs(f - double(i + 1) / n));
  }
  CHECK(ks <= 0.01);
}

TEST_CASE("probit latent FCD: sign and half-normal moment") {
  const ObsModel obs = ObsModel::probit(Vector::Constant(1, 1.0));
  Rng rng = stream(113, RngPhase::obs_fcd);
  const Vector hx = Vector::Zero(2);
  double acc = 0.0;
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    const Vector z = (Vector(2) << 1.0, 0.0).finished();
    const Vector y = sample_y_fcd(z, hx, obs, ParamVector::empty(), rng);
    CHECK(y(0) > 0.0);
    CHECK(y(1) <= 0.0);
    acc += y(0);
  }
  const double half_normal_mean = std::sqrt(2.0 / M_PI);
  const double se = std::sqrt((1.0 - 2.0 / M_PI) / reps);
  CHECK(std::abs(acc / reps - half_normal_mean) < 3 * se);

  const Vector bad = Vector::Constant(2, 2.0);
  CHECK_THROWS_AS(sample_y_fcd(bad, hx, obs, ParamVector::empty(), rng),
                  DataDomainError);
}

TEST_CASE("rainfall latent FCD") {
  const ObsModel obs = ObsModel::rainfall(3.0, Vector::Constant(1, 0.2));
  Rng rng = stream(127, RngPhase::obs_fcd);
  const Vector hx = Vector::Constant(1, 0.4);

  const Vector z8 = Vector::Constant(1, 8.0);
  const Vector y = sample_y_fcd(z8, hx, obs, ParamVector::empty(), rng);
  CHECK(y(0) == 2.0);  // 8^(1/3)

  for (int r = 0; r < 200; ++r) {
    const Vector y0 =
        sample_y_fcd(Vector::Zero(1), hx, obs, ParamVector::empty(), rng);
    CHECK(y0(0) <= 0.0);
  }
  CHECK_THROWS_AS(
      sample_y_fcd(Vector::Constant(1, -1.0), hx, obs, ParamVector::empty(), rng),
      DataDomainError);
}

TEST_CASE("rainfall transformation round-trip") {
  const double kappa = 3.0;
  const ObsModel obs = ObsModel::rainfall(kappa, Vector::Constant(1, 0.2));
  Rng rng = stream(131, RngPhase::obs_fcd);
  // Perfect cubes round-trip exactly.
  for (double z : {1.0, 8.0, 27.0, 64.0, 1000.0}) {
    const Vector y = sample_y_fcd(Vector::Constant(1, z), Vector::Zero(1), obs,
                                  ParamVector::empty(), rng);
    CHECK(std::pow(y(0), kappa) == z);
  }
  for (int r = 0; r < 100; ++r) {
    const double z = 10.0 * rng.uniform() + 0.01;
    const Vector y = sample_y_fcd(Vector::Constant(1, z), Vector::Zero(1), obs,
                                  ParamVector::empty(), rng);
    CHECK(std::pow(y(0), kappa) == doctest::Approx(z).epsilon(1e-14));
  }
}

TEST_CASE("latent draws are conditionally independent across coordinates") {
  const ObsModel obs = ObsModel::probit(Vector::Constant(1, 1.0));
  Rng rng = stream(137, RngPhase::obs_fcd);
  const Vector z = (Vector(2) << 1.0, 1.0).finished();
  const Vector hx = (Vector(2) << 0.3, -0.2).finished();
  const int reps = 10000;
  Matrix draws(2, reps);
  for (int r = 0; r < reps; ++r)
    draws.col(r) = sample_y_fcd(z, hx, obs, ParamVector::empty(), rng);
  const Matrix cov = column_cov(draws);
  const double corr = cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1));
  CHECK(std::abs(corr) <= 0.05);
}

TEST_CASE("kappa MH with no positive data samples the prior") {
  // Lognormal prior, median 3, log-sd 0.5.
  auto log_prior = [](double k) {
    const double r = (std::log(k) - std::log(3.0)) / 0.5;
    return -0.5 * r * r - std::log(k);
  };
  Rng rng = stream(139, RngPhase::mcmc);
  const Vector z = Vector::Zero(10), hx = Vector::Zero(10);
  const Vector sigma = Vector::Constant(1, 0.2);
  double kappa = 3.0;
  double sum = 0.0, sumsq = 0.0;
  const int iters = 40000;
  for (int i = 0; i < iters; ++i) {
    kappa = mh_update_kappa(z, hx, sigma, kappa, log_prior, 0.6, rng);
    sum += std::log(kappa);
    sumsq += std::log(kappa) * std::log(kappa);
  }
  const double mean = sum / iters;
  const double sd = std::sqrt(sumsq / iters - mean * mean);
  // log kappa ~ N(log 3, 0.5^2) under the prior.
  CHECK(std::abs(mean - std::log(3.0)) < 0.05);
  CHECK(std::abs(sd - 0.5) < 0.08);
}

TEST_CASE("kappa MH recovers the generating power") {
  Rng rng = stream(149, RngPhase::data);
  const Index m = 75;
  const double sigma = 0.2, true_kappa = 3.0;
  Vector hx(m), z(m);
  for (Index l = 0; l < m; ++l) {
    hx(l) = 0.2 + rng.normal();
    const double y = hx(l) + sigma * rng.normal();
    z(l) = y > 0 ? std::pow(y, true_kappa) : 0.0;
  }
  auto log_prior = [](double k) {
    const double r = (std::log(k) - std::log(3.0)) / 0.5;
    return -0.5 * r * r - std::log(k);
  };
  Rng chain_rng = stream(151, RngPhase::mcmc);
  double kappa = 2.0;
  double acc_mean = 0.0;
  int accepted = 0;
  const int iters = 4000, burn = 500;
  double prev = kappa;
  for (int i = 0; i < iters; ++i) {
    kappa = mh_update_kappa(z, hx, Vector::Constant(1, sigma), kappa, log_prior, 0.1,
                            chain_rng);
    if (kappa != prev) ++accepted;
    prev = kappa;
    if (i >= burn) acc_mean += kappa;
  }
  acc_mean /= (iters - burn);
  CHECK(acc_mean > 2.5);
  CHECK(acc_mean < 3.5);
  CHECK(double(accepted) / iters > 0.2);
}

TEST_CASE("poisson mode and curvature") {
  // Prior-dominated limit.
  {
    const PoissonLaplace lap = poisson_y_mode_and_curvature(
        Vector::Zero(1), Vector::Zero(1), Vector::Constant(1, 1e-10));
    CHECK(std::abs(lap.mode(0)) < 1e-8);
  }
  // Flat-prior MLE: y* -> log z.
  {
    const PoissonLaplace lap = poisson_y_mode_and_curvature(
        Vector::Constant(1, 1.0), Vector::Zero(1), Vector::Constant(1, 1e12));
    CHECK(std::abs(lap.mode(0) - 0.0) < 1e-5);
  }
  // z=5, mu=0, s^2=1 against a bisection oracle for 5 - e^y - y = 0.
  {
    double lo = 0.0, hi = 3.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (5.0 - std::exp(mid) - mid > 0 ? lo : hi) = mid;
    }
    const PoissonLaplace lap = poisson_y_mode_and_curvature(
        Vector::Constant(1, 5.0), Vector::Zero(1), Vector::Constant(1, 1.0));
    CHECK(std::abs(lap.mode(0) - lo) < 1e-8);
    CHECK(lap.hessian(0) == doctest::Approx(-std::exp(lap.mode(0)) - 1.0));
  }
  // z=0 with a tight prior above zero: mode sits below the prior mean.
  {
    const PoissonLaplace lap = poisson_y_mode_and_curvature(
        Vector::Zero(1), Vector::Constant(1, 1.0), Vector::Constant(1, 0.25));
    CHECK(lap.mode(0) < 1.0);
  }
}

TEST_CASE("poisson latent MH step targets the exact conditional") {
  // One-coordinate chain vs. a quadrature oracle for
  //   p(y) prop Poi(z=3 | e^y) N(y | 0, 1).
  const ObsModel obs = ObsModel::poisson_log(-1);
  ObsModel fixed = obs;
  fixed.sigma = Vector::Constant(1, 1.0);
  fixed.log_sigma_theta_index = -1;
  const Vector z = Vector::Constant(1, 3.0), hx = Vector::Zero(1);

  double num = 0.0, den = 0.0;
  for (int i = 0; i < 40000; ++i) {
    const double y = -8.0 + 16.0 * (i + 0.5) / 40000.0;
    const double w = std::exp(3.0 * y - std::exp(y) - 0.5 * y * y);
    num += y * w;
    den += w;
  }
  const double oracle_mean = num / den;

  Rng rng = stream(157, RngPhase::obs_fcd);
  Vector y = Vector::Zero(1);
  double acc = 0.0;
  const int iters = 20000, burn = 1000;
  for (int i = 0; i < iters; ++i) {
    y = sample_y_fcd(z, hx, fixed, ParamVector::empty(), rng, &y);
    if (i >= burn) acc += y(0);
  }
  CHECK(std::abs(acc / (iters - burn) - oracle_mean) < 0.02);
}
