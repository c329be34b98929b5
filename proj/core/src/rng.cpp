#include "caplab/rng.hpp"

#include <cmath>

namespace caplab {

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling over the largest multiple of n; unbiased and
  // deterministic given the stream.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = gen_();
  while (x >= limit) x = gen_();
  return x % n;
}

double Rng::gauss() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng substream(std::uint64_t root_seed, std::string_view name, std::uint64_t index) {
  std::uint64_t s = splitmix64(root_seed ^ fnv1a64(name));
  s = splitmix64(s ^ (index * 0x9e3779b97f4a7c15ULL + 1));
  return Rng(s);
}

}  // namespace caplab
