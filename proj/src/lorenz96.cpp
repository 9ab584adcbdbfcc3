#include "henkf/lorenz96.hpp"

#include <cmath>
#include <string>

#include "henkf/errors.hpp"
#include "henkf/rng.hpp"

namespace henkf {

Vector lorenz96_step(const Vector& x, double forcing, double delta, int substeps) {
  const Index n = x.size();
  if (n < 4) throw DimensionError("lorenz96 needs at least 4 sites");
  if (delta <= 0.0) throw ParameterDomainError("lorenz96 time step must be positive");
  if (substeps < 1) throw ParameterDomainError("lorenz96 needs substeps >= 1");

  const double h = delta / substeps;
  Vector cur = x;
  Vector drift(n);
  for (int s = 0; s < substeps; ++s) {
    for (Index i = 0; i < n; ++i) {
      const double xp1 = cur((i + 1) % n);
      const double xm1 = cur((i - 1 + n) % n);
      const double xm2 = cur((i - 2 + n) % n);
      drift(i) = (xp1 - xm2) * xm1 - cur(i) + forcing;
    }
    cur += h * drift;
    if (!cur.allFinite())
      throw DivergenceError("lorenz96 trajectory diverged at inner time " +
                            std::to_string((s + 1) * h));
  }
  return cur;
}

Matrix lorenz_climatology(Index n, double forcing, double delta, int substeps,
                          int burn_in_steps, int sample_steps, std::uint64_t seed) {
  if (sample_steps < 1000)
    throw ParameterDomainError("climatology needs at least 1000 sampled steps");
  Rng rng = stream(seed, RngPhase::data, 0, 0);
  Vector x = Vector::Constant(n, forcing);
  x(0) += 0.01 * (1.0 + rng.uniform());  // kick off the attractor transient
  for (int s = 0; s < burn_in_steps; ++s) x = lorenz96_step(x, forcing, delta, substeps);

  Vector sum = Vector::Zero(n);
  Matrix outer = Matrix::Zero(n, n);
  for (int s = 0; s < sample_steps; ++s) {
    x = lorenz96_step(x, forcing, delta, substeps);
    sum += x;
    outer.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
  }
  const double m = static_cast<double>(sample_steps);
  const Vector mean = sum / m;
  Matrix cov = Matrix(outer.selfadjointView<Eigen::Lower>()) / m -
               mean * mean.transpose();
  cov = ((cov + cov.transpose()) * 0.5).eval();
  if (!cov.allFinite()) throw DivergenceError("climatology accumulation diverged");
  return cov;
}

}  // namespace henkf
