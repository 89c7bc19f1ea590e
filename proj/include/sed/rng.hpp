#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace sed {

// SplitMix64 finalizer; used to derive independent stream seeds from one
// top-level seed.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for stream `stream` under `base`. Distinct (base, stream) pairs give
// statistically independent generators.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) noexcept;

// Portable pseudo-random source. The standard distributions are
// implementation-defined, so every variate here is built directly from the
// raw 64-bit engine output to keep runs identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p) { return uniform01() < p; }
  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace sed
