#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qcw {

/// Deterministic random source. Wraps mt19937_64 but implements the variate
/// transforms by hand, so a given seed yields the same stream on every
/// platform (the std::*_distribution algorithms are implementation-defined).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Exponential with the given rate (mean 1/rate).
  double exponential(double rate) {
    return -std::log1p(-uniform()) / rate;
  }

  /// Standard normal via Box-Muller (no rejection, fixed draw count).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Poisson variate; inversion for small means, PTRS-free normal
  /// approximation with rounding for large ones (adequate for dark counts).
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      double prod = uniform();
      std::uint64_t n = 0;
      while (prod > limit) {
        prod *= uniform();
        ++n;
      }
      return n;
    }
    const double v = std::round(normal(mean, std::sqrt(mean)));
    return v < 0.0 ? 0 : static_cast<std::uint64_t>(v);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Child generator with a seed derived from (seed, index); used to make
  /// per-point work independent of evaluation order.
  static Rng derived(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 step over the combined key
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

private:
  std::mt19937_64 engine_;
  double spare_{0.0};
  bool have_spare_{false};
};

}  // namespace qcw
