#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace gtselect {

// Platform-independent random helpers. std::uniform_*_distribution output
// differs between standard libraries, so draws are derived directly from the
// 64-bit Mersenne Twister stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Independent stream seed for a named pipeline stage.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

// Independent stream seed for an indexed worker (observation, feature, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace gtselect
