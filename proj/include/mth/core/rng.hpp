#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace mth {

/// Deterministic 64-bit generator (splitmix64). One instance per logical
/// stream; identical seeds give identical sequences on every platform,
/// which the resume and reproducibility guarantees depend on.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    if (lo == hi) return lo;
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n).
  uint64_t uniform_below(uint64_t n) {
    // multiply-shift; bias is negligible for n << 2^64 and it is branch-free
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  int uniform_int(int lo, int hi_exclusive) {
    return lo + static_cast<int>(uniform_below(
                    static_cast<uint64_t>(hi_exclusive - lo)));
  }

  /// Box-Muller without the cached spare, so the draw count per call is
  /// fixed and serializing the generator state stays trivial.
  double normal(double mu = 0.0, double sigma = 1.0) {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  a ^= b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2);
  Rng r(a);
  return r.next_u64();
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Seed for a named sub-stream, e.g. derive_seed(seed, "order", epoch).
inline uint64_t derive_seed(uint64_t base, std::string_view tag,
                            uint64_t index = 0) {
  return hash_combine(hash_combine(base, fnv1a(tag)), index);
}

}  // namespace mth
