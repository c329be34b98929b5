#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace caplab {

// All randomness in the project flows from one root seed through named
// substreams. Distribution sampling is hand-rolled on top of mt19937_64
// so that streams are reproducible bit-for-bit regardless of the C++
// standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller.
  double gauss();

  double gauss(double mean, double stddev) { return mean + stddev * gauss(); }

  // Fisher-Yates shuffle, deterministic given the stream position.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

// Derives an independent named substream from a root seed. `index` allows
// per-step or per-item streams within a stage.
Rng substream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

}  // namespace caplab
