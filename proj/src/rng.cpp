#include "rangecast/rng.hpp"

#include <cmath>

namespace rangecast {

double SplitMix64::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * next_uniform() - 1.0;
    v = 2.0 * next_uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

std::uint64_t SplitMix64::derive(std::uint64_t seed, std::uint64_t stream) {
  // One finalizer pass over (stream) mixed into the seed; any fixed bijective
  // mix works, this one is documented in the README so ports can match it.
  std::uint64_t z = stream + kGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return seed ^ z;
}

}  // namespace rangecast
