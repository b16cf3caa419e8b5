#pragma once

#include <cstdint>
#include <limits>

namespace aid_dti {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stateless stream keyed by (seed, key): the n-th draw depends only on the
/// key and n, never on how many other streams were consumed before. Meets the
/// UniformRandomBitGenerator requirements so std distributions can use it.
class CounterRng {
public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t key)
      : key_(splitmix64(seed ^ splitmix64(key + 0x632BE59BD9B4E019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

} // namespace aid_dti
