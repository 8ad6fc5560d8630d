#include "gfma/rng.hpp"

#include <algorithm>
#include <cmath>

namespace gfma {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

Rng Rng::derive(uint64_t seed, uint64_t stream) {
  return Rng(splitmix64(seed) ^ splitmix64(stream * 0xd1342543de82ef95ULL + 1));
}

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint64_t Rng::uniform_int(uint64_t n) {
  // rejection sampling keeps the draw unbiased
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = gen_();
  } while (v >= limit);
  return v % n;
}

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * kPi * u2);
  have_spare_ = true;
  return r * std::cos(2.0 * kPi * u2);
}

cxd Rng::cgaussian() {
  const double s = std::sqrt(0.5);
  const double re = s * gaussian();
  const double im = s * gaussian();
  return {re, im};
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  // Floyd's algorithm
  std::vector<int> out;
  out.reserve(k);
  for (int j = n - k; j < n; ++j) {
    int t = static_cast<int>(uniform_int(static_cast<uint64_t>(j) + 1));
    if (std::find(out.begin(), out.end(), t) != out.end()) t = j;
    out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace gfma
