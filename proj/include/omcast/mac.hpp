#pragma once

// One downlink transaction per slot: sounding (NDPA/NDP, first feedback,
// polls), MCS reselection on fresh CSI, a TXOP-bounded burst, per-user ACKs
// and retransmission bookkeeping for the intended user.

#include "omcast/decision.hpp"
#include "omcast/phy.hpp"
#include "omcast/queueing.hpp"
#include "omcast/rng.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace omcast::mac {

/// Frame-exchange timing, microseconds.
struct TimingModel {
    double ndpa_us = 68.0;
    double ndp_us = 48.0;
    double csi_fb_us_per_user = 120.0;
    double csi_poll_us = 44.0;
    double data_preamble_us = 40.0;
    double ack_us_per_user = 32.0;
    double ack_req_us = 28.0;
    double sifs_us = 16.0;
    double difs_us = 34.0;
    double backoff_slot_us = 9.0;
    double backoff_slots_mean = 7.5;
    bool random_backoff = false;

    friend bool operator==(const TimingModel&, const TimingModel&) = default;
};

struct MacConfig {
    TimingModel timing;
    double txop_s = 3e-3;
    int max_retx = 3;

    friend bool operator==(const MacConfig&, const MacConfig&) = default;
};

inline double sounding_us(std::size_t group_size, const TimingModel& tm)
{
    const auto extra = static_cast<double>(group_size - 1);
    return tm.ndpa_us + tm.sifs_us + tm.ndp_us + tm.sifs_us + tm.csi_fb_us_per_user
        + extra * (tm.csi_poll_us + tm.sifs_us + tm.csi_fb_us_per_user);
}

/// T = sounding + preamble + data + ACKs + ACK requests + DIFS + backoff.
/// `backoff_slots` overrides the mean when the backoff is randomized.
inline double slot_duration(std::size_t group_size, double burst_bits, double phy_rate_bps, const TimingModel& tm,
                            std::optional<double> backoff_slots = std::nullopt)
{
    if (group_size < 1) {
        throw std::invalid_argument("group size must be at least 1");
    }
    if (!(phy_rate_bps > 0.0)) {
        throw std::invalid_argument("PHY rate must be positive");
    }
    const auto g = static_cast<double>(group_size);
    const double us = sounding_us(group_size, tm) + tm.data_preamble_us + g * (tm.sifs_us + tm.ack_us_per_user)
        + (g - 1.0) * tm.ack_req_us + tm.difs_us + backoff_slots.value_or(tm.backoff_slots_mean) * tm.backoff_slot_us;
    return us * 1e-6 + burst_bits / phy_rate_bps;
}

/// Sounding that ended without a usable MCS: no data, no ACKs.
inline double no_transmission_duration(std::size_t group_size, const TimingModel& tm,
                                       std::optional<double> backoff_slots = std::nullopt)
{
    return (sounding_us(group_size, tm) + tm.difs_us
            + backoff_slots.value_or(tm.backoff_slots_mean) * tm.backoff_slot_us)
        * 1e-6;
}

struct BurstPlan {
    std::size_t frames = 0;
    std::uint64_t airtime_bits = 0;
    double data_airtime_s = 0.0;
    /// Bits counted once per group member that needs them.
    double b_bits = 0.0;
    /// Frames each member needs, aligned with the group (index 0 = intended).
    std::vector<std::size_t> member_frames;
};

/// Largest whole-frame prefix of the intended user's queue whose data airtime
/// fits in `txop_s`. `needs(i, frame)` tells whether member i >= 1 benefits.
template <class Needs>
BurstPlan pack_burst(const queueing::UserQueue& queue, double phy_rate_bps, std::size_t group_size, Needs&& needs,
                     double txop_s, std::size_t max_frames = std::numeric_limits<std::size_t>::max())
{
    BurstPlan plan;
    plan.member_frames.assign(group_size, 0);
    const double budget_bits = txop_s * phy_rate_bps * (1.0 + 1e-12);
    for (std::size_t i = 0; i < queue.size() && i < max_frames; ++i) {
        const auto& f = queue[i];
        if (static_cast<double>(plan.airtime_bits + f.size_bits) > budget_bits) {
            break;
        }
        plan.airtime_bits += f.size_bits;
        ++plan.frames;
        plan.b_bits += f.size_bits;
        ++plan.member_frames[0];
        for (std::size_t m = 1; m < group_size; ++m) {
            if (needs(m, f)) {
                plan.b_bits += f.size_bits;
                ++plan.member_frames[m];
            }
        }
    }
    plan.data_airtime_s = static_cast<double>(plan.airtime_bits) / phy_rate_bps;
    return plan;
}

/// Burst error model: a user misses the whole burst when the MCS needs more
/// than the mean capacity of its channel at transmit time. That channel
/// deviates from the sounded one by `csi_error` (correlation sqrt(1 - e^2)).
struct ErrorModel {
    bool enabled = false;
    double csi_error = 0.1;

    friend bool operator==(const ErrorModel&, const ErrorModel&) = default;
};

struct LinkContext {
    const phy::ChannelModel* model = nullptr;
    const phy::McsTable* mcs = nullptr;
    phy::NoiseModel noise;
    phy::PowerNormalization norm = phy::PowerNormalization::shared;
    MacConfig mac;
    ErrorModel errors;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
};

struct SlotOutcome {
    double duration_s = 0.0;
    double data_airtime_s = 0.0;
    bool transmitted = false;
    std::optional<int> mcs;
    std::vector<UserId> group;
    std::vector<queueing::Frame> delivered; // ACKed by the intended user
    std::vector<queueing::Frame> exhausted; // dropped at the retransmission limit
    std::size_t errored = 0;                // intended frames left for retransmission
    std::vector<bool> member_error;         // aligned with group
    std::vector<std::size_t> cached;        // new cache entries, aligned with group
    double intended_bits = 0.0;             // b_k of the intended user's queue
    double b_total_bits = 0.0;              // |S'|-fold
    /// Drop in HOL delay caused by frames leaving the head (M for psi);
    /// infinity when the queue emptied.
    double hol_gap_ms = 0.0;
};

inline std::optional<double> draw_backoff(const TimingModel& tm, std::uint64_t seed, std::uint64_t epoch)
{
    if (!tm.random_backoff) {
        return std::nullopt;
    }
    auto eng = make_engine(seed, Stream::backoff, epoch);
    const auto max_slots = static_cast<int>(std::lround(2.0 * tm.backoff_slots_mean));
    std::uniform_int_distribution<int> pick{0, std::max(0, max_slots)};
    return static_cast<double>(pick(eng));
}

/// The channel the burst actually sees, given the sounded one.
inline phy::ChannelMatrix realized_channel(const phy::ChannelMatrix& sounded, const queueing::UserState& u,
                                           const LinkContext& ctx)
{
    const double e = ctx.errors.csi_error;
    if (e <= 0.0) {
        return sounded;
    }
    const double gain = phy::db_to_linear(u.snr_db) * ctx.noise.n0;
    auto fresh = ctx.model->draw(u.id, gain, ctx.seed, ctx.epoch, Stream::csi_error);
    const double keep = std::sqrt(std::max(0.0, 1.0 - e * e));
    const auto& d = sounded.dims();
    for (std::size_t n = 0; n < d.subcarriers; ++n) {
        for (std::size_t r = 0; r < d.rx; ++r) {
            for (std::size_t t = 0; t < d.tx; ++t) {
                fresh(n, r, t) = keep * sounded(n, r, t) + e * fresh(n, r, t);
            }
        }
    }
    return fresh;
}

/// Executes steps 2-5 for a non-idle decision. `channel(user)` returns the
/// current-epoch channel. Mutates the intended user's queue and the members'
/// caches; nothing else.
template <class ChannelFn>
SlotOutcome transact(const SchedulerDecision& decision, std::vector<queueing::UserState>& users, ChannelFn&& channel,
                     const LinkContext& ctx)
{
    if (decision.idle() || decision.group.empty() || decision.group.front() != *decision.intended) {
        throw std::invalid_argument("transact needs a decision whose group starts with the intended user");
    }
    SlotOutcome out;
    out.group = decision.group;
    out.member_error.assign(out.group.size(), false);
    out.cached.assign(out.group.size(), 0);
    out.hol_gap_ms = 0.0;
    const auto backoff = draw_backoff(ctx.mac.timing, ctx.seed, ctx.epoch);

    // Step 2: sounding on the current channel; step 3: MCS on fresh CSI.
    std::vector<const phy::ChannelMatrix*> hs;
    hs.reserve(out.group.size());
    for (auto k : out.group) {
        hs.push_back(&channel(k));
    }
    phy::GroupRate link;
    try {
        link = phy::evaluate_group(hs, ctx.noise, *ctx.mcs, ctx.norm);
    } catch (const phy::DegenerateChannel&) {
        out.duration_s = no_transmission_duration(out.group.size(), ctx.mac.timing, backoff);
        return out;
    }
    if (!link.mcs) {
        out.duration_s = no_transmission_duration(out.group.size(), ctx.mac.timing, backoff);
        return out;
    }
    out.mcs = link.mcs;
    const double rate = ctx.mcs->rate_bps(*link.mcs);

    auto& owner = users.at(*decision.intended);
    const std::size_t limit
        = decision.retransmission ? owner.retx_pending : std::numeric_limits<std::size_t>::max();
    auto needs = [&](std::size_t m, const queueing::Frame& f) { return queueing::needs(users[out.group[m]], f); };
    const auto burst = pack_burst(owner.queue, rate, out.group.size(), needs, ctx.mac.txop_s, limit);
    out.transmitted = burst.frames > 0;
    out.data_airtime_s = burst.data_airtime_s;
    out.duration_s = slot_duration(out.group.size(), static_cast<double>(burst.airtime_bits), rate, ctx.mac.timing,
                                   backoff);
    if (!out.transmitted) {
        return out;
    }

    // Step 4: per-user reception.
    if (ctx.errors.enabled) {
        const double need = ctx.mcs->at(*link.mcs).required_efficiency;
        for (std::size_t m = 0; m < out.group.size(); ++m) {
            const auto actual = realized_channel(*hs[m], users[out.group[m]], ctx);
            out.member_error[m] = need > phy::user_rate(actual, link.precoder, ctx.noise);
        }
    }

    // Unintended members keep what they need; no retransmission for them.
    std::vector<queueing::Frame> burst_frames(owner.queue.frames().begin(),
                                              owner.queue.frames().begin() + static_cast<std::ptrdiff_t>(burst.frames));
    for (std::size_t m = 1; m < out.group.size(); ++m) {
        if (out.member_error[m]) {
            continue;
        }
        auto& member = users[out.group[m]];
        for (const auto& f : burst_frames) {
            if (queueing::needs(member, f)) {
                member.cache.insert(f.key());
                ++out.cached[m];
                out.b_total_bits += f.size_bits;
            }
        }
    }

    // Step 5: intended user's ACK or retransmission bookkeeping.
    if (!out.member_error[0]) {
        out.hol_gap_ms = owner.queue.hol_gap_ms(burst.frames, std::numeric_limits<double>::infinity());
        out.delivered = owner.queue.pop_front(burst.frames);
        owner.retx_pending = owner.retx_pending > burst.frames ? owner.retx_pending - burst.frames : 0;
        for (const auto& f : out.delivered) {
            out.intended_bits += f.size_bits;
        }
        out.b_total_bits += out.intended_bits;
    } else {
        std::size_t spent = 0;
        while (spent < burst.frames && owner.queue[spent].retx_count >= ctx.mac.max_retx) {
            ++spent;
        }
        for (std::size_t i = spent; i < burst.frames; ++i) {
            ++owner.queue[i].retx_count;
        }
        out.hol_gap_ms = spent == 0 ? 0.0 : owner.queue.hol_gap_ms(spent, std::numeric_limits<double>::infinity());
        out.exhausted = owner.queue.pop_front(spent);
        out.errored = burst.frames - spent;
        owner.retx_pending = std::max(out.errored, owner.retx_pending > spent ? owner.retx_pending - spent : 0);
    }
    return out;
}

} // namespace omcast::mac
