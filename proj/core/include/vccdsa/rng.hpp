#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace vccdsa {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// 64-bit FNV-1a, used to turn stream names into seed tags.
std::uint64_t fnv1a64(std::string_view text) noexcept;

// Mixes a base seed with a list of tags into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::initializer_list<std::uint64_t> tags = {}) noexcept;

// Deterministic generator. Distributions are computed from raw engine bits
// so draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double symmetric(double bound) { return uniform(-bound, bound); }
  int uniform_int(int n);              // [0, n)
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace vccdsa
