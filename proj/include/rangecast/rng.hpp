#pragma once

#include <cstdint>

namespace rangecast {

// SplitMix64 (Steele, Lea & Flood 2014). Chosen as the project-wide random
// source because the whole sequence is a pure function of the 64-bit seed:
// state advances by a fixed odd constant and each output is a finalizer of
// the state, so identically-seeded runs reproduce bit-for-bit on any
// platform with 64-bit integers. Reference outputs for seed 0 are pinned in
// the unit tests.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGamma;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on [0,1) with 53 bits of mantissa.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via the Marsaglia polar method (no trig calls).
  double next_normal();

  // Independent substream seed for a named stream of a master seed, used so
  // that per-(model, fold, day) substreams can be derived deterministically.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rangecast
