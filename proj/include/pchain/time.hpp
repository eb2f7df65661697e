#pragma once

#include <cstdint>
#include <limits>

namespace pchain {

/// Simulated time in milliseconds.
using SimTime = std::int64_t;

inline constexpr SimTime ms = 1;
inline constexpr SimTime seconds = 1000;
inline constexpr SimTime time_never = std::numeric_limits<SimTime>::max();

} // namespace pchain
