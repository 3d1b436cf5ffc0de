// Deterministic, platform-independent randomness. Every consumer owns an RngStream
// keyed by (seed, index); the sequence a stream produces depends only on its key,
// never on scheduling, so parallel and serial runs emit bit-identical results.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace apsiv {

// splitmix64 finalizer; also used as the seed/key mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derive an independent child seed from (seed, tag). Chaining derive_seed calls
// builds disjoint stream families (per replication, per bandwidth, per purpose).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag + 0xD1B54A32D192ED03ULL));
}

// xoshiro256++ (Blackman & Vigna, public domain reference implementation).
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t key) {
    std::uint64_t sm = key;
    for (auto& word : s_) {
      sm += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = sm;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      word = z ^ (z >> 31);
    }
    s_[0] |= 1;  // never all-zero
  }

  std::uint64_t next() {
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

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : gen_(key) {}

  std::uint64_t next_u64() { return gen_.next(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Standard normal via the Marsaglia polar method with a one-value cache.
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    cache_ = v * f;
    has_cache_ = true;
    return u * f;
  }

  int bernoulli(double p) { return uniform01() < p ? 1 : 0; }

 private:
  Xoshiro256pp gen_;
  bool has_cache_ = false;
  double cache_ = 0.0;
};

// Stream for observation i under a run seed. Pure function of (seed, i).
inline RngStream make_stream(std::uint64_t seed, std::uint64_t i) {
  return RngStream(derive_seed(seed, i));
}

// One independent stream per observation; stream i depends only on (seed, i),
// so consumers may draw from them in any order or from any thread.
inline std::vector<RngStream> make_rng_streams(std::uint64_t seed, std::int64_t n) {
  std::vector<RngStream> streams;
  streams.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) streams.push_back(make_stream(seed, static_cast<std::uint64_t>(i)));
  return streams;
}

}  // namespace apsiv
