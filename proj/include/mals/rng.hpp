#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace mals {

/// Counter-based random stream built on the splitmix64 finalizer.
/// A stream is keyed by (seed, tags...); disjoint tags give disjoint
/// substreams, so the draws for rollout k / step t / a given noise
/// source are the same no matter which thread produces them.
class Substream {
 public:
  explicit Substream(std::uint64_t seed) : state_(mix(seed ^ kInit)) {}

  template <class... Tags>
  Substream(std::uint64_t seed, Tags... tags) : state_(mix(seed ^ kInit)) {
    (fold(static_cast<std::uint64_t>(tags)), ...);
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform on the open interval (0,1).
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; one draw consumes two uniforms.
  double next_gaussian() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = next_gaussian();
    return v;
  }

 private:
  void fold(std::uint64_t t) { state_ = mix(state_ ^ (t + kGamma)); }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kInit = 0xD1B54A32D192ED03ull;

  std::uint64_t state_;
};

/// Substream tags. Keys are (seed, tag, rollout, step) or (seed, tag, step).
enum StreamTag : std::uint64_t {
  kStreamNoiseA = 1,
  kStreamNoiseB = 2,
  kStreamInput = 3,
  kStreamInitState = 4,
  kStreamScheduleMean = 5,
  kStreamScheduleSecond = 6,
  kStreamVariances = 7,
  kStreamGraph = 8,
};

}  // namespace mals
