#pragma once

// Seedable random numbers whose output is identical on every platform.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard library's distributions are not portable, so every
// distribution used by the toolkit is implemented here on top of the raw
// 64-bit stream. Independent streams are derived with splitmix64 so results do
// not depend on iteration or thread order.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace choicealign {

/// Identifier written into dataset metadata so other implementations can replay.
inline constexpr std::string_view kPrngId = "mt19937_64+splitmix64-streams/v1";

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` of master seed `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// FNV-1a 64-bit hash of a byte string.
std::uint64_t fnv1a64(std::string_view text);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  /// Uniform on (0, 1).
  double uniform_open01();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  double normal();  // Marsaglia polar method
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double lognormal(double mu, double sigma);
  bool bernoulli(double p) { return uniform01() < p; }
  /// Index drawn with the given probabilities (must sum to ~1).
  std::size_t categorical(std::span<const double> probs);

  /// ln of a Gamma(shape, 1) draw (Marsaglia-Tsang, boosted for shape < 1).
  /// Working in logs keeps tiny-shape draws strictly positive after exp.
  double log_gamma_draw(double shape);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace choicealign
