#pragma once

#include <cstdint>
#include <random>

namespace qnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// One stream per replication. The same (seed, rep) pair yields the same
// sequence on every platform: mt19937_64 with single-value seeding is fully
// specified by the standard, and doubles are built from the top 53 bits
// rather than going through uniform_real_distribution (whose output is
// implementation-defined).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t rep = 0)
      : seed_(seed), rep_(rep),
        engine_(splitmix64(splitmix64(seed) ^ (0xd1342543de82ef95ULL * (rep + 1)))) {}

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t bits() { return engine_(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t rep() const { return rep_; }

 private:
  std::uint64_t seed_;
  std::uint64_t rep_;
  std::mt19937_64 engine_;
};

}  // namespace qnet
