#include "henkf/rng.hpp"

#include <cmath>

#include "henkf/errors.hpp"

namespace henkf {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d, std::uint64_t e) {
  std::uint64_t state = a;
  std::uint64_t h = splitmix64(state);
  for (std::uint64_t k : {b, c, d, e}) {
    state = h ^ (k + 0x9e3779b97f4a7c15ULL);
    h = splitmix64(state);
  }
  return h;
}

Rng::Rng(std::uint64_t key) {
  // splitmix64 expansion: nearby keys give uncorrelated engine states.
  std::uint64_t s = key;
  for (auto& word : state_) word = splitmix64(s);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace

std::uint64_t Rng::next_u64() {
  // xoshiro256++ (Blackman & Vigna, public domain).
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_normal_ = true;
  return r * std::cos(a);
}

double Rng::gamma(double shape) {
  if (shape <= 0.0) throw ParameterDomainError("gamma shape must be positive");
  if (shape < 1.0) {
    // Boost to shape+1 and scale back.
    const double u = std::max(uniform(), 1e-300);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

double Rng::inv_gamma(double shape, double rate) {
  if (rate <= 0.0) throw ParameterDomainError("inverse-gamma rate must be positive");
  return rate / gamma(shape);
}

double Rng::student_t(double dof) {
  if (dof <= 0.0) throw ParameterDomainError("t dof must be positive");
  const double z = normal();
  const double g = 2.0 * gamma(dof / 2.0);  // chi^2_dof
  return z / std::sqrt(g / dof);
}

int Rng::poisson(double lambda) {
  if (lambda < 0.0) throw ParameterDomainError("poisson rate must be nonnegative");
  if (lambda == 0.0) return 0;
  if (lambda < 30.0) {
    const double limit = std::exp(-lambda);
    double prod = uniform();
    int k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }
  // Split large rates; counts in this project stay far below overflow.
  const int half = poisson(lambda / 2.0);
  return half + poisson(lambda - lambda / 2.0);
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw ParameterDomainError("uniform_index needs n >= 1");
  // Rejection to avoid modulo bias.
  const std::uint64_t limit = n * (~0ULL / n);
  std::uint64_t draw = next_u64();
  while (draw >= limit) draw = next_u64();
  return draw % n;
}

Rng stream(std::uint64_t seed, RngPhase phase, std::uint64_t time,
           std::uint64_t unit, std::uint64_t sweep) {
  return Rng(mix_keys(seed, static_cast<std::uint64_t>(phase), time, unit, sweep));
}

}  // namespace henkf
