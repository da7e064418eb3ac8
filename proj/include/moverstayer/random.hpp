#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace moverstayer {

// Independent random streams keyed by (seed, purpose, index).
//
// Every random task (a simulated subject, a multi-start point, a bootstrap
// replicate, a study replication) draws from its own stream, so results do
// not depend on scheduling or on how many other tasks ran. The engine is
// std::mt19937_64 seeded through std::seed_seq, both fully specified by the
// standard; the variate transforms below are written out instead of using
// <random> distributions, whose algorithms are implementation-defined.
enum class StreamPurpose : std::uint32_t {
  subject = 1,
  start = 2,
  bootstrap = 3,
  replication = 4,
  warp_speed = 5,
};

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose),
                      static_cast<std::uint32_t>(index & 0xffffffffu),
                      static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; each call consumes exactly two uniforms.
  double normal(double mean = 0.0, double sd = 1.0) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [lo, hi].
  long long uniform_int(long long lo, long long hi) {
    const auto span = static_cast<double>(hi - lo + 1);
    auto k = static_cast<long long>(std::floor(uniform() * span));
    if (k > hi - lo) k = hi - lo;
    return lo + k;
  }

  int binomial(int trials, double p) {
    int k = 0;
    for (int i = 0; i < trials; ++i) k += bernoulli(p) ? 1 : 0;
    return k;
  }

 private:
  std::mt19937_64 engine_;
};

// 64-bit seed for a child task (e.g. the simulation seed of replication i).
inline std::uint64_t derive_seed(std::uint64_t seed, StreamPurpose purpose,
                                 std::uint64_t index) {
  RandomStream s(seed, purpose, index);
  return s.next();
}

}  // namespace moverstayer
