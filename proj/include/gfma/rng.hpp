#pragma once

#include <cstdint>
#include <random>

#include "gfma/types.hpp"

namespace gfma {

// Seeded random stream. Distribution sampling is implemented explicitly
// (multiply-shift uniforms, Box-Muller normals) so that a given (seed, stream)
// pair produces the same draw sequence regardless of the standard library's
// distribution internals; trial reproducibility depends on it.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Independent substream for e.g. (trial, purpose) pairs.
  static Rng derive(uint64_t seed, uint64_t stream);

  uint64_t next_u64() { return gen_(); }
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  uint64_t uniform_int(uint64_t n);       // {0, ..., n-1}
  double gaussian();                      // N(0, 1)
  cxd cgaussian();                        // CN(0, 1)

  // k distinct values from {0, ..., n-1}, ascending.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

uint64_t splitmix64(uint64_t x);

}  // namespace gfma
