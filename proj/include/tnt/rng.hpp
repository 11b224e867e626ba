#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tnt {

// Seeded random source. All randomness in the library flows through explicit
// Rng instances; a run's single u64 seed is split into named streams
// ("init", "droppath", "data") so changing one consumer leaves the others
// untouched.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  virtual ~Rng() = default;

  Rng(const Rng&) = default;
  Rng& operator=(const Rng&) = default;

  // Uniform in [0, 1). Virtual so tests can force drop-path outcomes.
  virtual double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Normal(0, std) resampled until it falls within +-bound_in_std * std.
  double truncated_normal(double std, double bound_in_std = 2.0);
  std::uint64_t next_u64() { return engine_(); }
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }

  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
  static Rng stream(std::uint64_t seed, std::string_view name) { return Rng(derive_seed(seed, name)); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tnt
