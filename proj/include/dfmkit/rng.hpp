#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

#include <Eigen/Core>

namespace dfmkit {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// Keys are derived so that (seed, stream) pairs index independent streams.
constexpr std::uint64_t derive_stream_key(std::uint64_t seed,
                                          std::uint64_t stream) noexcept {
  return mix64(mix64(seed + kGolden) ^ (kGolden * (stream + 1)));
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h + kGolden * (v + 1));
}

// Counter-based uniform/Gaussian stream. The k-th draw of a given
// (seed, stream) pair is identical no matter which thread consumes it or
// what other streams exist, so simulations are reproducible across
// thread counts.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream)
      : key_(derive_stream_key(seed, stream)) {}

  // uniform in (0, 1)
  double uniform() {
    const std::uint64_t w = mix64(key_ + kGolden * ++ctr_);
    return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
  }

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  void fill(Eigen::Ref<Eigen::VectorXd> v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = next();
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable hash of a parameter vector, used to derive simulation seeds that
// vary with theta while staying deterministic.
inline std::uint64_t hash_parameters(std::uint64_t seed,
                                     const Eigen::VectorXd& theta) {
  std::uint64_t h = mix64(seed ^ kGolden);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(double));
    const double x = theta[i];
    std::memcpy(&bits, &x, sizeof(bits));
    h = hash_combine(h, bits);
  }
  return h;
}

}  // namespace dfmkit
