#pragma once

#include <cmath>
#include <cstdint>

namespace csim {

// SplitMix64 stream generator. Every random decision in the toolkit goes
// through one of these, seeded from a (seed, id, tag) triple, so datasets,
// training runs and replays are reproducible and independently streamable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform over {0, ..., n-1}. Modulo bias is < n / 2^64, irrelevant here.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  double normal(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return mean + stddev * radius * std::cos(angle);
  }

  // Laplace(center, 1/rate) via inverse CDF.
  double laplace(double center, double rate) {
    double u = uniform() - 0.5;
    double mag = -std::log(1.0 - 2.0 * std::fabs(u)) / rate;
    return u < 0 ? center - mag : center + mag;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

namespace stream {
// Tags keep per-purpose streams decorrelated even when ids collide.
inline constexpr std::uint64_t kTrace = 0x7261636500000001ULL;
inline constexpr std::uint64_t kPolicy = 0x706f6c6900000002ULL;
inline constexpr std::uint64_t kAssign = 0x617373676e000003ULL;
inline constexpr std::uint64_t kJobs = 0x6a6f627300000004ULL;
inline constexpr std::uint64_t kInit = 0x696e697400000005ULL;
inline constexpr std::uint64_t kBatch = 0x6261746368000006ULL;
inline constexpr std::uint64_t kFleet = 0x666c656574000007ULL;
}  // namespace stream

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a decorrelated sub-seed for stream `tag` of entity `id`.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t id, std::uint64_t tag) {
  std::uint64_t x = mix64(seed + 0x9e3779b97f4a7c15ULL);
  x = mix64(x ^ (id + 0xbf58476d1ce4e5b9ULL));
  return mix64(x ^ tag);
}

}  // namespace csim
