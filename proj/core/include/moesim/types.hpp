#pragma once

#include <cstdint>
#include <stdexcept>

namespace moesim {

// Simulated time is integer nanoseconds everywhere; no floating-point time.
using TimeNs = std::int64_t;

using Bytes = std::uint64_t;
using Count = std::uint64_t;

inline constexpr std::uint64_t ceil_div_u64(std::uint64_t a, std::uint64_t b) {
  return b == 0 ? 0 : (a + b - 1) / b;
}

// ceil(a / b) over 128-bit intermediates; b must be nonzero.
inline unsigned __int128 ceil_div_u128(unsigned __int128 a, unsigned __int128 b) {
  if (a == 0) return 0;
  return (a - 1) / b + 1;
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace moesim
