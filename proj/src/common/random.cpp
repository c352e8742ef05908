#include "choicealign/random.hpp"

#include <cmath>
#include <limits>

#include "choicealign/error.hpp"

namespace choicealign {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform_open01() {
  double u;
  do {
    u = uniform01();
  } while (u == 0.0);
  return u;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw_usage("uniform_index: empty range");
  // rejection sampling removes modulo bias
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

double Rng::lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

std::size_t Rng::categorical(std::span<const double> probs) {
  if (probs.empty()) throw_usage("categorical: no categories");
  const double u = uniform01();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  // rounding slack lands on the last positive-probability category
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

double Rng::log_gamma_draw(double shape) {
  if (!(shape > 0.0)) throw_usage("gamma: shape must be positive");
  double boost = 0.0;
  double a = shape;
  if (a < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    boost = std::log(uniform_open01()) / a;
    a += 1.0;
  }
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open01();
    if (u < 1.0 - 0.0331 * (x * x) * (x * x) ||
        std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return std::log(d) + std::log(v) + boost;
    }
  }
}

}  // namespace choicealign
