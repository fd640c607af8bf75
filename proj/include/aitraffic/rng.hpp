#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace aitraffic {

// SplitMix64 finalizer; used to derive independent stream seeds from tuples.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a) noexcept {
  return mix64(mix64(base) ^ (a * 0xd1b54a32d192ed03ULL + 1));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
  return derive_seed(derive_seed(base, a), b);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                                    std::uint64_t c) noexcept {
  return derive_seed(derive_seed(base, a, b), c);
}

/// Random stream owned by exactly one consumer. Normal variates use the
/// ziggurat sampler from Boost.Random.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double normal(double mean, double stddev) { return stddev > 0.0 ? mean + stddev * normal_(engine_) : mean; }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
  boost::random::uniform_01<double> uniform_;
};

}  // namespace aitraffic
