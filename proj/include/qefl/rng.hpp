#pragma once
// Deterministic splittable PRNG streams.
//
// Every stochastic component draws from a SplitRng stream derived from one
// master seed through a chain of 64-bit tags (purpose, round, client,
// variant). Streams are plain value types: copying one replays its future
// draws, and deriving a child never depends on how many draws the parent has
// made, so concurrent consumers cannot perturb each other.
//
// The exact transforms are part of the reproducibility contract:
//   - stream advance: splitmix64 (golden-gamma increment + avalanche mix)
//   - uniform doubles: 53-bit mantissa scaling of the top bits
//   - gaussians: Box-Muller on two uniforms, second value cached per stream
//   - bounded integers: rejection sampling, no modulo bias
//   - gamma variates: Marsaglia-Tsang squeeze, shape<1 via the boost identity

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qefl {

namespace detail {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Purpose tags for stream derivation. One shared table so that no two
// subsystems can collide on the same derived stream.
namespace stream {
inline constexpr std::uint64_t kInit = 0x01;
inline constexpr std::uint64_t kSynthetic = 0x02;
inline constexpr std::uint64_t kSplit = 0x03;
inline constexpr std::uint64_t kShard = 0x04;
inline constexpr std::uint64_t kMutation = 0x05;
inline constexpr std::uint64_t kShuffle = 0x06;
inline constexpr std::uint64_t kNoise = 0x07;
inline constexpr std::uint64_t kDropout = 0x08;
inline constexpr std::uint64_t kObjective = 0x09;
inline constexpr std::uint64_t kVariantTable = 0x0a;
}  // namespace stream

class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed)
      : id_(detail::mix64(seed + detail::kGoldenGamma)), state_(id_) {}

  // Child stream identified by (parent identity, tag). Independent of the
  // parent's draw position.
  SplitRng derive(std::uint64_t tag) const {
    return SplitRng(id_ ^ detail::mix64(tag + 0x7f4a7c15ull));
  }

  template <typename... Tags>
  SplitRng derive(std::uint64_t tag, Tags... rest) const {
    return derive(tag).derive(static_cast<std::uint64_t>(rest)...);
  }

  std::uint64_t next_u64() {
    state_ += detail::kGoldenGamma;
    return detail::mix64(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_open01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the sine branch is cached and returned
  // on the next call.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) {
      throw std::invalid_argument("SplitRng::below: n must be positive");
    }
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) {
        return r % n;
      }
    }
  }

  // Gamma(shape, 1), shape > 0.
  double gamma(double shape) {
    if (!(shape > 0.0)) {
      throw std::invalid_argument("SplitRng::gamma: shape must be positive");
    }
    if (shape < 1.0) {
      const double u = uniform_open01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = gaussian();
      const double t = 1.0 + c * x;
      if (t <= 0.0) {
        continue;
      }
      const double v = t * t * t;
      const double u = uniform_open01();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v;
      }
    }
  }

 private:
  std::uint64_t id_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fisher-Yates shuffle driven by the supplied stream.
template <typename T>
void shuffle(std::vector<T>& values, SplitRng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace qefl
