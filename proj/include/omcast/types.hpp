#pragma once

#include <cstddef>
#include <cstdint>

namespace omcast {

using UserId = std::size_t;
using ContentId = int;
using SeqNo = std::int64_t;

/// HOL delays are kept in milliseconds; slot durations in seconds.
inline constexpr double kMsPerSecond = 1000.0;

/// Largest multicast group, intended user included.
inline constexpr std::size_t kMaxGroupSize = 4;

} // namespace omcast
