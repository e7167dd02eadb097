#pragma once
// Counter-based splittable PRNG: the SplitMix64 finalizer applied in counter
// mode. A stream is (key, counter); word i of a stream is
//   mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
// and child streams are derived by hashing a tag into the parent key.
// Constants are the canonical SplitMix64 ones (Steele et al. / Stafford
// mix13), fixed here so worlds and runs reproduce bit-for-bit for a given
// seed. Gaussian draws use basic Box-Muller, so bit-reproducibility across
// platforms additionally assumes a correctly rounded libm; on one platform
// the streams are exact.

#include <cmath>
#include <cstdint>

namespace alqueue {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
inline constexpr double kPi = 3.14159265358979323846;

// SplitMix64 finalizer. Bijective on 64-bit words (xor-shifts and odd
// multiplications are invertible), which dedup_key relies on.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t hash_at(std::uint64_t key, std::uint64_t ctr) {
  return mix64(key + (ctr + 1) * kGolden);
}

class Rng {
 public:
  explicit Rng(std::uint64_t key, std::uint64_t start = 0) : key_(key), ctr_(start) {}

  // Child stream for a fixed role; independent of draws made on the parent.
  static Rng derive(std::uint64_t parent_key, std::uint64_t tag) {
    return Rng(hash_at(parent_key, tag));
  }

  std::uint64_t next_u64() { return hash_at(key_, ctr_++); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log argument.
  double next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (cosine branch only, so each draw
  // consumes exactly two counter positions).
  double next_normal() {
    const double u1 = next_double_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, n); n > 0.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(next_double() * static_cast<double>(n));
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return ctr_; }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_;
};

// Stream tags. Arbitrary distinct constants; never reuse a value.
namespace rng_tag {
inline constexpr std::uint64_t kFeatureMap = 0x01;
inline constexpr std::uint64_t kFingerprint = 0x02;
inline constexpr std::uint64_t kWorldGeometry = 0x03;
inline constexpr std::uint64_t kGeneratorInit = 0x04;
inline constexpr std::uint64_t kReferenceMixture = 0x05;
inline constexpr std::uint64_t kReferenceDraws = 0x06;
inline constexpr std::uint64_t kHoldoutDraws = 0x07;
inline constexpr std::uint64_t kPoolDraws = 0x08;
inline constexpr std::uint64_t kCalibration = 0x09;
inline constexpr std::uint64_t kOracleNoise = 0x0a;
inline constexpr std::uint64_t kSimLatency = 0x0b;
inline constexpr std::uint64_t kProducer = 0x0c;
inline constexpr std::uint64_t kRandomAcquisition = 0x0d;
inline constexpr std::uint64_t kBootstrap = 0x0e;
inline constexpr std::uint64_t kFeatureSubsample = 0x0f;
inline constexpr std::uint64_t kReorderWarm = 0x10;
inline constexpr std::uint64_t kFineTune = 0x11;
}  // namespace rng_tag

}  // namespace alqueue
