#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <henkf/builtin_models.hpp>
#include <henkf/lorenz96.hpp>
#include <henkf/model.hpp>

#include "support/test_util.hpp"

using namespace henkf;

TEST_CASE("matern15 values") {
  CHECK(matern15(0.0, 2.0) == doctest::Approx(1.0));
  CHECK(matern15(500.0, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  // u = 1: (1 + sqrt(3)) exp(-sqrt(3))
  CHECK(matern15(1.0, 1.0) == doctest::Approx(0.48335772).epsilon(1e-6));
  CHECK(matern15(3.0, 3.0) == doctest::Approx(0.48335772).epsilon(1e-6));
  CHECK_THROWS_AS(matern15(1.0, 0.0), ParameterDomainError);
  CHECK_THROWS_AS(matern15(1.0, -2.0), ParameterDomainError);
}

TEST_CASE("covariance functions build PSD matrices") {
  for (const CovFunction& f :
       {CovFunction::powered_exp(1.8, 10.0), CovFunction::matern(5.0, 0.2)}) {
    const Matrix c = f.build_grid(40);
    CHECK(c.isApprox(c.transpose()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("lorenz96 equilibrium at x = F") {
  const double f = 8.0;
  const Vector x = Vector::Constant(40, f);
  const Vector out = lorenz96_step(x, f, 0.2, 40);
  CHECK((out - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("lorenz96 rotational equivariance") {
  Rng rng = stream(3, RngPhase::data);
  const Vector x = test::random_vector(40, rng, 3.0);
  const int k = 7;
  auto rotate = [&](const Vector& v) {
    Vector out(40);
    for (Index i = 0; i < 40; ++i) out((i + k) % 40) = v(i);
    return out;
  };
  const Vector a = rotate(lorenz96_step(x, 8.0, 0.2, 40));
  const Vector b = lorenz96_step(rotate(x), 8.0, 0.2, 40);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lorenz96 one Euler substep from zero state") {
  const Vector x = Vector::Zero(40);
  const Vector out = lorenz96_step(x, 8.0, 0.1, 1);
  CHECK((out - Vector::Constant(40, 0.8)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("lorenz96 Euler halving convergence") {
  Rng rng = stream(5, RngPhase::data);
  Vector x = Vector::Constant(40, 8.0);
  for (Index i = 0; i < 40; ++i) x(i) += rng.normal();
  // Settle onto the attractor first.
  for (int s = 0; s < 50; ++s) x = lorenz96_step(x, 8.0, 0.2, 64);
  const Vector c64 = lorenz96_step(x, 8.0, 0.2, 64);
  const Vector c128 = lorenz96_step(x, 8.0, 0.2, 128);
  const Vector c256 = lorenz96_step(x, 8.0, 0.2, 256);
  CHECK((c64 - c128).norm() <= 2.0 * (c128 - c256).norm() * 1.30);
  CHECK((c64 - c128).norm() >= (c128 - c256).norm());  // first order, not higher
}

TEST_CASE("lorenz96 divergence reporting") {
  Vector x = Vector::Zero(40);
  for (Index i = 0; i < 40; ++i) x(i) = (i % 2 == 0) ? 1e8 : -1e8;
  CHECK_THROWS_AS(lorenz96_step(x, 8.0, 0.2, 40), DivergenceError);
}

TEST_CASE("lorenz climatology structure") {
  const Matrix cov = lorenz_climatology(40, 8.0, 0.2, 40, 1000, 50000, 99);
  CHECK((cov.diagonal().array() > 0.0).all());

  // Cyclic symmetry: compare entries along the main and first diagonal under
  // an index shift.
  const double mean_var = cov.diagonal().mean();
  for (Index i = 0; i < 40; ++i) {
    const double a = cov(i, i);
    const double b = cov((i + 1) % 40, (i + 1) % 40);
    CHECK(std::abs(a - b) < 0.25 * std::max(std::abs(a), std::abs(b)));
    const double c = cov(i, (i + 1) % 40);
    const double d = cov((i + 1) % 40, (i + 2) % 40);
    if (std::max(std::abs(c), std::abs(d)) > 0.05 * mean_var)
      CHECK(std::abs(c - d) < 0.25 * std::max(std::abs(c), std::abs(d)));
  }

  const Matrix cov2 = lorenz_climatology(40, 8.0, 0.2, 40, 1000, 50000, 100);
  CHECK(std::abs(cov.trace() - cov2.trace()) < 0.10 * cov.trace());
}

TEST_CASE("cloud evolution matrix definition") {
  CHECK(cloud_evolution_matrix(1.0, 0.0, 0.0, 5).isApprox(Matrix::Identity(5, 5)));

  const Matrix m = cloud_evolution_matrix(0.5, 0.2, 0.3, 3);
  Matrix expected(3, 3);
  expected << 0.5, 0.2, 0.0, 0.3, 0.5, 0.2, 0.0, 0.3, 0.5;
  CHECK(m.isApprox(expected));

  Vector e1 = Vector::Zero(3);
  e1(0) = 1.0;
  const Vector prod = m * e1;
  CHECK(prod(0) == doctest::Approx(0.5));
  CHECK(prod(1) == doctest::Approx(0.3));
  CHECK(prod(2) == doctest::Approx(0.0));

  // Linearity is exact (dyadic coefficients and integer inputs: no rounding).
  const Matrix md = cloud_evolution_matrix(0.5, 0.25, 0.125, 3);
  Rng rng = stream(9, RngPhase::data);
  Vector u(3), v(3);
  for (Index i = 0; i < 3; ++i) {
    u(i) = double(rng.uniform_index(17)) - 8.0;
    v(i) = double(rng.uniform_index(17)) - 8.0;
  }
  CHECK((md * (u + v) - (md * u + md * v)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_paper_model lorenz96 constants") {
  const PaperModel pm = build_paper_model(
      PaperModelName::lorenz96, {{"climatology_samples", 5000}});
  CHECK(pm.model.state_dim == 40);
  CHECK(pm.constants.at("F") == 8.0);
  CHECK(pm.constants.at("delta") == 0.2);
  CHECK(pm.constants.at("q_scale") == 0.2);
  CHECK(pm.default_horizon == 10);
  const ParamVector theta = ParamVector::scalar(1.0);
  CHECK(pm.model.obs_matrix(theta, 1).isApprox(Matrix::Identity(40, 40)));
  CHECK(pm.model.obs_noise(theta, 1).isApprox(Matrix::Identity(40, 40)));
  // Q_t = 0.2 Sigma_L for t >= 2, and Sigma_L is the initial covariance.
  CHECK(pm.model.innovation(theta, 2).isApprox(0.2 * pm.model.init_cov));
  CHECK(pm.model.innovation(theta, 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_paper_model cloud constants") {
  const PaperModel pm = build_paper_model(PaperModelName::cloud);
  CHECK(pm.model.state_dim == 60);
  CHECK(pm.default_horizon == 80);
  CHECK(pm.constants.at("m_observed") == 54.0);
  CHECK(pm.model.transformation.family == ObsModel::Family::poisson_log);
  Rng rng = stream(1, RngPhase::init);
  const ParamVector theta0 = pm.model.param_init.sample(rng);
  CHECK(theta0.get("gamma1") == doctest::Approx(0.3));
  CHECK(theta0.get("log_lambda") == doctest::Approx(std::log(8.0)));
}

TEST_CASE("build_paper_model sim_study constants") {
  const PaperModel pm = build_paper_model(PaperModelName::sim_study);
  CHECK(pm.model.state_dim == 100);
  CHECK(pm.constants.at("m") == 75.0);
  CHECK(pm.constants.at("mean") == 0.2);
  CHECK(pm.constants.at("sigma") == 0.2);
  CHECK(pm.model.init_cov(0, 1) ==
        doctest::Approx(std::exp(-std::pow(1.0 / 10.0, 1.8))));
}

TEST_CASE("build_paper_model rejects unknown overrides") {
  CHECK_THROWS_AS(build_paper_model(PaperModelName::sim_study, {{"bogus", 1.0}}),
                  ConfigError);
}

TEST_CASE("built-in models have valid noise matrices under prior thetas") {
  for (PaperModelName name : {PaperModelName::toy_example4, PaperModelName::cloud}) {
    const PaperModel pm = name == PaperModelName::cloud
                              ? build_paper_model(name)
                              : build_paper_model(name, {{"n", 8}});
    for (int rep = 0; rep < 100; ++rep) {
      Rng rng = stream(77, RngPhase::init, 0, rep);
      ParamVector theta = pm.model.param_init.sample(rng);
      if (!pm.model.param_transition.is_static && pm.model.param_transition.sample)
        theta = pm.model.param_transition.sample(theta, 2, rng);
      const Matrix r = pm.model.obs_noise(theta, 2);
      CHECK(Eigen::LLT<Matrix>(r).info() == Eigen::Success);
      const Matrix q = pm.model.innovation(theta, 2);
      if (q.size() > 0 && q.cwiseAbs().maxCoeff() > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(q, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
      }
    }
  }
}

TEST_CASE("evolution maps are deterministic") {
  const PaperModel pm =
      build_paper_model(PaperModelName::lorenz96, {{"climatology_samples", 5000}});
  Rng rng = stream(13, RngPhase::data);
  const Vector x = test::random_vector(40, rng, 2.0);
  const ParamVector theta = ParamVector::scalar(0.9);
  const Vector a = pm.model.evolve(x, theta, 3);
  const Vector b = pm.model.evolve(x, theta, 3);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}
