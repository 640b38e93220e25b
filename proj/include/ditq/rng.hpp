#ifndef DITQ_RNG_HPP
#define DITQ_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ditq {

// splitmix64 step: advances the state and returns a mixed 64-bit value.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stateless mix of a seed with a sequence of stream identifiers. Used to give
// every (seed, tag, index...) tuple its own independent generator so tensors
// can be produced lazily and in any order.
inline std::uint64_t mix_seed(std::uint64_t seed) { return seed; }

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t head, Rest... rest) {
  std::uint64_t s = seed ^ (head + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
  splitmix64(s);
  return mix_seed(s, rest...);
}

// Deterministic generator with uniform and standard-normal draws. The normal
// transform is done by hand so sequences do not depend on the standard
// library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; generates pairs and caches the spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ditq

#endif  // DITQ_RNG_HPP
