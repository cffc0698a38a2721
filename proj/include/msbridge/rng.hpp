#pragma once

#include <cstdint>
#include <random>

namespace msbridge {

/// Seeded random source. One instance per logical stream; all draws are
/// deterministic given the seed on a single thread.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  float uniform(float lo = 0.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    return d(engine_);
  }

  float normal(float mean = 0.0f, float stddev = 1.0f) {
    std::normal_distribution<float> d(mean, stddev);
    return d(engine_);
  }

  /// Uniform integer in [0, n).
  int index(int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(engine_);
  }

  bool bernoulli(double p) {
    std::bernoulli_distribution d(p);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

  /// Derives an independent stream from this seed and a stream id.
  /// splitmix64 finalizer; avoids correlated child streams.
  static uint64_t derive(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace msbridge
