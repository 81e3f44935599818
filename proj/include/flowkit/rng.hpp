#pragma once

#include "flowkit/tensor.hpp"

#include <cstdint>

namespace flowkit {

/// Deterministic, stream-splittable pseudo-random generator.
///
/// Algorithm: xoshiro256++ (Blackman & Vigna). The four state words are the
/// first four outputs of a SplitMix64 sequence whose starting state is
///   seed + 0x9E3779B97F4A7C15 * mix64(stream)
/// where mix64 is the SplitMix64 output function. This places every
/// (seed, stream) pair at a well-mixed position, so identical pairs replay
/// identical sequences and distinct streams are statistically independent.
/// All arithmetic is on uint64 plus IEEE doubles, so sequences are
/// reproducible across platforms with the same libm rounding.
///
/// Normal deviates use the Marsaglia polar method; the spare value is cached,
/// so a sequence of calls is a pure function of (seed, stream, call order).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Child generator on an independent stream derived from (stream, child).
  Rng split(std::uint64_t child) const;

  std::uint64_t next_u64();

  /// Uniform double in [0, 1), 53 random bits.
  double uniform();

  /// Standard normal deviate.
  double normal();

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// SplitMix64 output function (public for documentation/testing).
  static std::uint64_t mix64(std::uint64_t z);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Tensor of i.i.d. standard normal entries; deterministic given rng state.
Tensor sample_standard_normal(Rng& rng, Shape shape);

/// n samples of t = sigmoid(z), z ~ N(0,1). Every value lies strictly inside
/// (0, 1); results at the representable boundary are nudged one ulp inward.
Tensor sample_logit_normal(Rng& rng, Index n);

}  // namespace flowkit
