#pragma once

#include "omcast/types.hpp"

#include <optional>
#include <vector>

namespace omcast {

/// Per-slot transmission choice. Dropping is decided after the transaction.
struct SchedulerDecision {
    std::optional<UserId> intended; // nullopt: idle slot
    std::vector<UserId> group;      // intended user first, |S| <= 4
    bool retransmission = false;
    std::optional<int> mcs;         // estimate from outdated CSI
    std::size_t frames = 0;         // burst length estimate
    double b_bits = 0.0;            // usable bits, counted |S'|-fold
    double predicted_duration_s = 0.0;
    double score = 0.0;

    bool idle() const noexcept { return !intended.has_value(); }
};

} // namespace omcast
