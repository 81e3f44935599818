#include "flowkit/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace flowkit {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t splitmix_next(std::uint64_t& state) {
  state += kGolden;
  return Rng::mix64(state);
}

}  // namespace

std::uint64_t Rng::mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::uint64_t sm = seed + kGolden * mix64(stream);
  for (auto& w : s_) w = splitmix_next(sm);
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

Rng Rng::split(std::uint64_t child) const {
  return Rng(seed_, mix64(stream_ + kGolden * (child + 1)));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

Tensor sample_standard_normal(Rng& rng, Shape shape) {
  Tensor out(std::move(shape));
  for (Index i = 0; i < out.size(); ++i) out[i] = rng.normal();
  return out;
}

Tensor sample_logit_normal(Rng& rng, Index n) {
  if (n < 0) throw std::invalid_argument("sample_logit_normal: negative count");
  Tensor out(Shape{n});
  for (Index i = 0; i < n; ++i) {
    const double z = rng.normal();
    double t = 1.0 / (1.0 + std::exp(-z));
    // sigmoid saturates for |z| beyond ~36.7; keep the open-interval contract.
    if (t >= 1.0) t = std::nextafter(1.0, 0.0);
    if (t <= 0.0) t = std::nextafter(0.0, 1.0);
    out[i] = t;
  }
  return out;
}

}  // namespace flowkit
