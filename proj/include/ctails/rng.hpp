#pragma once

#include <cstdint>
#include <random>

namespace ctails {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic stream keyed by (seed, key). Replica k of a run always uses
// key = k, so its draw sequence does not depend on which worker executed it.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t key = 0) {
    std::uint64_t s = seed;
    splitmix64(s);
    s ^= key;
    splitmix64(s);
    engine_.seed(splitmix64(s));
  }

  double normal() { return normal_(engine_); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t raw() { return engine_(); }

  // Key for a derived substream (per node, per lineage, ...).
  static std::uint64_t derive(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    return splitmix64(s);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ctails
