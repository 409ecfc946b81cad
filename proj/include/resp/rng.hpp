#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace resp {

// Counter-based deterministic random stream. All sampling is implemented
// over raw 64-bit outputs so results are bit-identical across platforms.
// Substreams are derived by hashing a label or index into the key, which
// makes parallel use safe: disjoint labels give statistically independent
// streams regardless of how many draws each one makes.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class RngStream {
 public:
  explicit RngStream(uint64_t key) : key_(splitmix64(key)), counter_(0) {}

  uint64_t next_u64() {
    uint64_t v = splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
    return v;
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in {0, ..., n-1}.
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // +1 or -1 with equal probability.
  int rademacher() { return (next_u64() & 1ULL) ? 1 : -1; }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Index sampled proportionally to nonnegative weights.
  int categorical(const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) {
      if (x < 0.0) throw std::invalid_argument("categorical: negative weight");
      total += x;
    }
    if (total <= 0.0) throw std::invalid_argument("categorical: zero total weight");
    double u = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i + 1 < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
  }

  RngStream substream(const std::string& label) const {
    return RngStream(key_ ^ fnv1a64(label));
  }

  RngStream substream(uint64_t index) const {
    return RngStream(key_ ^ splitmix64(index ^ 0xd1b54a32d192ed03ULL));
  }

  RngStream substream(const std::string& label, uint64_t index) const {
    return substream(label).substream(index);
  }

 private:
  uint64_t key_;
  uint64_t counter_;
};

}  // namespace resp
