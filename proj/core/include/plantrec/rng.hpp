#pragma once

#include <cstdint>
#include <string_view>

namespace plantrec {

/// Counter-based deterministic generator (splitmix64). Bit-identical output
/// on every platform, which the reproducibility guarantees of this project
/// depend on; std::uniform_* distributions are implementation-defined and
/// must not be used anywhere in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Derives an independent stream seed; used to give each named sub-stream
  /// (search restart, synth instance, weight init) its own generator.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    Rng r(seed ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
    r.next_u64();
    return r.next_u64();
  }

  static std::uint64_t derive(std::uint64_t seed, std::string_view tag, std::uint64_t salt = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return derive(seed ^ h, salt);
  }

 private:
  std::uint64_t state_;
};

/// FNV-1a over raw bytes; provenance digests in output documents.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace plantrec
