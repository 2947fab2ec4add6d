#pragma once

#include <cstdint>
#include <random>

namespace treebvm {

// splitmix64 step; also used as the mixing function for derived streams.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent stream key for (seed, index) pairs: replications, chains,
// noise draws. Two mixing rounds keep distinct (seed, index) pairs apart
// even for small consecutive indices.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64_next(s);
  s ^= index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
  std::uint64_t b = splitmix64_next(s);
  return a ^ (b + 0x9e3779b97f4a7c15ULL);
}

// Wrapper around a single PRNG stream. All randomness in the library goes
// through this class so that every experiment is reproducible from one seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_seed_(seed), engine_(expand(seed)) {}

  // Independent child stream keyed by (this stream's seed, index).
  Rng child(std::uint64_t index) const { return Rng(derive_stream(base_seed_, index)); }

  std::uint64_t base_seed() const { return base_seed_; }

  double uniform() { return unit_(engine_); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }

  // Uniform on {0, 1, ..., n-1}.
  std::int64_t uniform_int(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
  }

  double normal() { return normal_(engine_); }

  double exponential(double rate) {
    return std::exponential_distribution<double>(rate)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::mt19937_64 expand(std::uint64_t seed) {
    // Spread the 64-bit seed over the full mt19937_64 state.
    std::uint64_t s = seed;
    std::seed_seq seq{splitmix64_next(s), splitmix64_next(s), splitmix64_next(s),
                      splitmix64_next(s), splitmix64_next(s), splitmix64_next(s)};
    return std::mt19937_64(seq);
  }

  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace treebvm
