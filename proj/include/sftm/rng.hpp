#pragma once

#include <cstdint>
#include <random>

namespace sftm {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t splitmix64(std::uint64_t x);

/// Child seed for stream `index` of a parent seed. Used for per-path,
/// per-row and per-grid-point streams so work can run in any order.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

/// Deterministic generator: std::mt19937_64 (fully specified by the
/// standard) with uniforms taken from the top 53 bits and standard normals
/// from the Marsaglia polar method. std::normal_distribution is not used
/// because its algorithm is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sftm
