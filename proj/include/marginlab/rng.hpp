#pragma once

#include <cstdint>
#include <random>

namespace marginlab {

// mt19937_64 stream. Uniforms take the top 53 bits; normals come from
// Box-Muller with the second variate cached.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }
  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1p-53; }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  int rademacher() { return (eng_() >> 63) ? 1 : -1; }
  // uniform on {0, ..., bound-1}
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer applied to seed + index; used for per-trial and per-cell streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace marginlab
