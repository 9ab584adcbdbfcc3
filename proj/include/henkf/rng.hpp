// Keyed random streams. Every stochastic routine derives its own stream from
// (seed, phase, time, unit, sweep) so that results do not depend on worker
// count or evaluation order, and reruns with the same seed are byte-identical.
#pragma once

#include <cstdint>
#include <random>

namespace henkf {

// Phases separate the draw sequences of different operations sharing a seed.
enum class RngPhase : std::uint64_t {
  init = 1,
  forecast = 2,
  update = 3,
  obs_fcd = 4,
  theta_fcd = 5,
  proposal = 6,
  resample = 7,
  refresh = 8,
  data = 9,
  mcmc = 10,
  mask = 11,
  study = 12,
};

std::uint64_t splitmix64(std::uint64_t& state);

// Order-insensitive-free key combiner (order matters, collisions negligible).
std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                       std::uint64_t d = 0, std::uint64_t e = 0);

// Deterministic random stream over a xoshiro256++ engine (cheap to
// construct, so per-member streams cost nothing). All distributions are
// implemented on top of the raw 64-bit output so draws are reproducible
// across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t key);

  std::uint64_t next_u64();
  double uniform();                 // U[0,1), 53-bit resolution
  double normal();                  // standard normal (Box-Muller, cached pair)
  double gamma(double shape);       // unit scale, Marsaglia-Tsang
  double inv_gamma(double shape, double rate);  // 1/Gamma(shape, rate)
  double student_t(double dof);
  int poisson(double lambda);
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// Stream for a (seed, phase, time, unit, sweep) cell.
Rng stream(std::uint64_t seed, RngPhase phase, std::uint64_t time = 0,
           std::uint64_t unit = 0, std::uint64_t sweep = 0);

}  // namespace henkf
