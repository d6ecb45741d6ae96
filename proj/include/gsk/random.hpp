#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace gsk {

/// Counter-based generator: the n-th output is a pure function of (key, n).
///
/// Streams are split by deriving new keys, so a replicate's randomness does not
/// depend on which thread runs it or on what ran before it. Satisfies
/// UniformRandomBitGenerator, so it plugs into the <random> distributions.
class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0) : key_(mix(key ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Independent child stream identified by `tag`.
  CounterRng split(std::uint64_t tag) const { return CounterRng(derive(key_, tag)); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(*this);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(*this); }

  int rademacher() { return ((*this)() >> 63) ? 1 : -1; }

  std::uint64_t key() const { return key_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t derive(std::uint64_t key, std::uint64_t tag) {
    return mix(mix(key) ^ (tag * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
  }

  template <class... Tags>
  static std::uint64_t derive(std::uint64_t key, std::uint64_t tag, Tags... rest) {
    return derive(derive(key, tag), static_cast<std::uint64_t>(rest)...);
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gsk
