#pragma once

// Seedable, portable random number generation. All stochastic behavior in
// the project (init, dropout, shuffles, Dirichlet draws) flows through the
// generators here so that a seed fully determines every run.
//
// Generator: xoshiro256** seeded through splitmix64. Gamma sampling uses
// Marsaglia-Tsang squeeze-rejection; normal sampling uses Box-Muller.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace fids {

struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

// Mixes a base seed with stream identifiers (client id, round, epoch...)
// to derive independent, reproducible streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  SplitMix64 sm(seed ^ (a * 0xd1342543de82ef95ULL) ^ (b * 0xaf251af3b0f025b5ULL));
  sm.next();
  return sm.next();
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : state_) s = sm.next();
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0,1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) without modulo bias.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Normal(0, sigma^2) truncated to [-2 sigma, 2 sigma] by rejection.
  double truncated_normal(double sigma) {
    for (;;) {
      const double z = normal();
      if (z >= -2.0 && z <= 2.0) return z * sigma;
    }
  }

  // Gamma(alpha, 1). Marsaglia-Tsang for alpha >= 1; the alpha < 1 case
  // boosts to alpha + 1 and multiplies by U^(1/alpha).
  double gamma(double alpha) {
    if (alpha < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Symmetric Dirichlet(alpha * 1_K) via normalized gamma draws.
  std::vector<double> dirichlet(double alpha, std::size_t k) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (auto& x : p) {
      x = gamma(alpha);
      sum += x;
    }
    if (sum <= 0.0) {
      // All draws underflowed (tiny alpha); fall back to a point mass.
      p.assign(k, 0.0);
      p[uniform_below(k)] = 1.0;
      return p;
    }
    for (auto& x : p) x /= sum;
    return p;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fids
