#pragma once

// Drift-plus-penalty (LO) scheduling and frame dropping, multicast group
// formation, and the MLWDF / round-robin baselines.

#include "omcast/decision.hpp"
#include "omcast/mac.hpp"
#include "omcast/phy.hpp"
#include "omcast/queueing.hpp"
#include "omcast/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace omcast::sched {

struct LoParams {
    double v = 1000.0;          // control weight V
    double beta = 4e-5;         // rate weight
    double drop_weight = 125.0; // v_k, uniform over users
    double epsilon = 1000.0;    // ms per second
    double l_max_bits = 8000.0;
    double t_max_s = 3e-3;

    friend bool operator==(const LoParams&, const LoParams&) = default;
};

/// Z_k^2 - (sum_{j != k} Z_j + V) eps T_k + V beta b_k
inline double lo_score(double z_ms, double sum_z_others_ms, double v, double epsilon, double t_s, double beta,
                       double b_bits)
{
    return z_ms * z_ms - (sum_z_others_ms + v) * epsilon * t_s + v * beta * b_bits;
}

/// Step-1 objective of the idle action: nobody served for `t_s`.
inline double lo_idle_score(double sum_z_ms, double v, double epsilon, double t_s)
{
    return -(sum_z_ms + v) * epsilon * t_s;
}

/// d_k = L_k if Z~^2 >= V beta v_k L_k, else 0.
inline double lo_drop(double z_tilde_ms, double l_bits, const LoParams& p)
{
    return z_tilde_ms * z_tilde_ms >= p.v * p.beta * p.drop_weight * l_bits ? l_bits : 0.0;
}

/// Worst-case HOL delay sqrt(V v_k beta L_max) in ms.
inline double z_max(const LoParams& p)
{
    return std::sqrt(p.v * p.drop_weight * p.beta * p.l_max_bits);
}

/// Fewest head frames whose removal lowers the HOL delay by more than
/// eps T_max; the whole queue when no such prefix exists.
inline std::size_t min_drop_frames(const queueing::UserQueue& q, double epsilon, double t_max_s)
{
    const double need_ms = epsilon * t_max_s;
    for (std::size_t n = 1; n < q.size(); ++n) {
        if (q.hol_gap_ms(n, 0.0) > need_ms) {
            return n;
        }
    }
    return q.size();
}

/// HOL frames older than the deadline at `now_s`.
inline std::size_t baseline_deadline_drop(const queueing::UserQueue& q, double deadline_ms, double now_s)
{
    std::size_t n = 0;
    while (n < q.size() && (now_s - q[n].arrival_s) * kMsPerSecond > deadline_ms) {
        ++n;
    }
    return n;
}

using ChannelLookup = std::function<const phy::ChannelMatrix&(UserId)>;

struct UnicastEstimate {
    std::optional<int> mcs;
    double rate_bps = 0.0; // PHY rate of the MCS, 0 when none fits
};

/// Read-only view of the AP state handed to a scheduler each slot. Channel
/// lookups return outdated (previous-epoch) CSI. Holds per-slot memos.
class PlanContext {
public:
    PlanContext(const std::vector<queueing::UserState>& users, ChannelLookup stale, const phy::McsTable& mcs,
                phy::NoiseModel noise, phy::PowerNormalization norm, const mac::MacConfig& mac, bool multicast,
                double idle_quantum_s)
        : users_(users), stale_(std::move(stale)), mcs_(mcs), noise_(noise), norm_(norm), mac_(mac),
          multicast_(multicast), idle_quantum_s_(idle_quantum_s), unicast_(users.size()),
          ceiling_(users.size())
    {
        int max_content = -1;
        for (const auto& u : users) {
            max_content = std::max(max_content, u.content);
        }
        by_content_.resize(static_cast<std::size_t>(max_content + 1));
        for (const auto& u : users) {
            by_content_[static_cast<std::size_t>(u.content)].push_back(u.id);
        }
    }

    const std::vector<queueing::UserState>& users() const noexcept { return users_; }
    const phy::ChannelMatrix& stale(UserId k) const { return stale_(k); }
    const phy::McsTable& mcs() const noexcept { return mcs_; }
    phy::NoiseModel noise() const noexcept { return noise_; }
    phy::PowerNormalization norm() const noexcept { return norm_; }
    const mac::MacConfig& mac() const noexcept { return mac_; }
    bool multicast() const noexcept { return multicast_; }
    double idle_quantum_s() const noexcept { return idle_quantum_s_; }

    const std::vector<UserId>& subscribers(ContentId c) const { return by_content_.at(static_cast<std::size_t>(c)); }

    /// Best unicast MCS for user k on outdated CSI, memoized for the slot.
    const UnicastEstimate& unicast(UserId k) const
    {
        auto& slot = unicast_.at(k);
        if (!slot) {
            UnicastEstimate est;
            const phy::ChannelMatrix* h = &stale(k);
            try {
                est.mcs = phy::evaluate_group(std::span<const phy::ChannelMatrix* const>{&h, 1}, noise_, mcs_, norm_).mcs;
            } catch (const phy::DegenerateChannel&) {
                est.mcs.reset();
            }
            est.rate_bps = est.mcs ? mcs_.rate_bps(*est.mcs) : 0.0;
            slot = est;
        }
        return *slot;
    }

    double top_rate_bps() const { return mcs_.rate_bps(static_cast<int>(mcs_.size()) - 1); }

    /// PHY rate of the best MCS any precoder could give user k; 0 if none.
    double rate_ceiling_bps(UserId k) const
    {
        auto& slot = ceiling_.at(k);
        if (!slot) {
            const double cap = phy::rate_ceiling(stale(k), noise_);
            const auto m = phy::select_mcs(std::span<const double>{&cap, 1}, mcs_);
            slot = m ? mcs_.rate_bps(*m) : 0.0;
        }
        return *slot;
    }

private:
    const std::vector<queueing::UserState>& users_;
    ChannelLookup stale_;
    const phy::McsTable& mcs_;
    phy::NoiseModel noise_;
    phy::PowerNormalization norm_;
    const mac::MacConfig& mac_;
    bool multicast_;
    double idle_quantum_s_;
    std::vector<std::vector<UserId>> by_content_;
    mutable std::vector<std::optional<UnicastEstimate>> unicast_;
    mutable std::vector<std::optional<double>> ceiling_;
};

/// Intended user k plus up to three unintended users that need a frame among
/// the first `window` frames of k's queue, ranked by the norm criterion on
/// outdated CSI (descending, lower index first on ties).
inline std::vector<UserId> form_group(UserId k, std::size_t window, const PlanContext& ctx)
{
    std::vector<UserId> group{k};
    const auto& owner = ctx.users().at(k);
    const auto& q = owner.queue;
    const std::size_t w = std::min(window, q.size());
    if (w == 0) {
        return group;
    }

    struct Ranked {
        UserId user;
        double metric;
    };
    std::vector<Ranked> eligible;
    for (UserId s : ctx.subscribers(owner.content)) {
        if (s == k) {
            continue;
        }
        const auto& u = ctx.users()[s];
        // Frames are in ascending seq order; only the tail can be ahead of u.
        if (q[w - 1].seq < u.next_seq) {
            continue;
        }
        bool wanted = false;
        for (std::size_t i = w; i-- > 0;) {
            if (q[i].seq < u.next_seq) {
                break;
            }
            if (queueing::needs(u, q[i])) {
                wanted = true;
                break;
            }
        }
        if (wanted) {
            eligible.push_back({s, phy::grouping_metric(ctx.stale(k), ctx.stale(s))});
        }
    }
    std::stable_sort(eligible.begin(), eligible.end(), [](const Ranked& a, const Ranked& b) {
        return a.metric > b.metric || (a.metric == b.metric && a.user < b.user);
    });
    for (std::size_t i = 0; i < eligible.size() && group.size() < kMaxGroupSize; ++i) {
        group.push_back(eligible[i].user);
    }
    return group;
}

namespace detail {

inline std::optional<int> group_mcs(const std::vector<UserId>& group, const PlanContext& ctx)
{
    if (group.size() == 1) {
        return ctx.unicast(group.front()).mcs;
    }
    std::vector<const phy::ChannelMatrix*> hs;
    hs.reserve(group.size());
    for (auto s : group) {
        hs.push_back(&ctx.stale(s));
    }
    try {
        return phy::evaluate_group(hs, ctx.noise(), ctx.mcs(), ctx.norm()).mcs;
    } catch (const phy::DegenerateChannel&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Group, MCS estimate, burst and predicted slot time if user k is served
/// now. Retransmissions go to k alone and carry only its pending frames.
inline SchedulerDecision plan_transmission(UserId k, const PlanContext& ctx, bool retransmission = false)
{
    SchedulerDecision d;
    d.intended = k;
    d.retransmission = retransmission;
    d.group = {k};
    const auto& owner = ctx.users().at(k);
    const auto& timing = ctx.mac().timing;
    const std::size_t limit = retransmission ? owner.retx_pending : std::numeric_limits<std::size_t>::max();
    auto no_needs = [](std::size_t, const queueing::Frame&) { return false; };

    const auto& uni = ctx.unicast(k);
    if (!uni.mcs || owner.queue.empty()) {
        d.mcs = uni.mcs;
        d.predicted_duration_s = mac::no_transmission_duration(1, timing);
        return d;
    }

    std::optional<int> mcs = uni.mcs;
    if (ctx.multicast() && !retransmission) {
        const auto window = mac::pack_burst(owner.queue, uni.rate_bps, 1, no_needs, ctx.mac().txop_s, limit).frames;
        auto group = form_group(k, window, ctx);
        if (group.size() > 1) {
            auto gm = detail::group_mcs(group, ctx);
            if (gm) {
                // Members that would need nothing from the burst at the
                // group MCS only add sounding and ACK overhead.
                auto needs = [&](std::size_t m, const queueing::Frame& f) {
                    return queueing::needs(ctx.users()[group[m]], f);
                };
                const auto trial
                    = mac::pack_burst(owner.queue, ctx.mcs().rate_bps(*gm), group.size(), needs, ctx.mac().txop_s, limit);
                std::vector<UserId> kept{k};
                for (std::size_t m = 1; m < group.size(); ++m) {
                    if (trial.member_frames[m] > 0) {
                        kept.push_back(group[m]);
                    }
                }
                if (kept.size() != group.size()) {
                    group = std::move(kept);
                    gm = detail::group_mcs(group, ctx);
                }
            }
            if (gm) {
                d.group = std::move(group);
                mcs = gm;
            }
        }
    }

    const double rate = ctx.mcs().rate_bps(*mcs);
    auto needs = [&](std::size_t m, const queueing::Frame& f) { return queueing::needs(ctx.users()[d.group[m]], f); };
    const auto burst = mac::pack_burst(owner.queue, rate, d.group.size(), needs, ctx.mac().txop_s, limit);
    d.mcs = mcs;
    d.frames = burst.frames;
    d.b_bits = burst.b_bits;
    d.predicted_duration_s = mac::slot_duration(d.group.size(), static_cast<double>(burst.airtime_bits), rate, timing);
    return d;
}

inline SchedulerDecision idle_decision(double quantum_s)
{
    SchedulerDecision d;
    d.predicted_duration_s = quantum_s;
    return d;
}

/// True if (score_a, z_a, a) ranks before (score_b, z_b, b): higher score,
/// then larger HOL delay, then lower user index.
inline bool ranks_before(double score_a, double z_a, UserId a, double score_b, double z_b, UserId b)
{
    if (score_a != score_b) {
        return score_a > score_b;
    }
    if (z_a != z_b) {
        return z_a > z_b;
    }
    return a < b;
}

/// Argmax of Z_k r_k over nonempty queues.
inline std::optional<UserId> mlwdf_pick(std::span<const double> z_ms, std::span<const double> rate,
                                        const std::vector<bool>& nonempty)
{
    std::optional<UserId> best;
    double best_score = 0.0;
    for (UserId k = 0; k < z_ms.size(); ++k) {
        if (!nonempty[k]) {
            continue;
        }
        const double s = z_ms[k] * rate[k];
        if (!best || ranks_before(s, z_ms[k], k, best_score, z_ms[*best], *best)) {
            best = k;
            best_score = s;
        }
    }
    return best;
}

/// Next nonempty queue after `cursor` in cyclic order (from 0 without one).
inline std::optional<UserId> rr_pick(std::optional<UserId> cursor, const std::vector<bool>& nonempty)
{
    const std::size_t n = nonempty.size();
    if (n == 0) {
        return std::nullopt;
    }
    const std::size_t start = cursor ? (*cursor + 1) % n : 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = (start + i) % n;
        if (nonempty[k]) {
            return k;
        }
    }
    return std::nullopt;
}

enum class SchedulerKind { lo, mlwdf, rr };

inline std::string_view to_string(SchedulerKind k)
{
    switch (k) {
    case SchedulerKind::lo:
        return "lo";
    case SchedulerKind::mlwdf:
        return "mlwdf";
    case SchedulerKind::rr:
        return "rr";
    }
    return "?";
}

inline std::optional<SchedulerKind> parse_scheduler(std::string_view s)
{
    if (s == "lo") {
        return SchedulerKind::lo;
    }
    if (s == "mlwdf") {
        return SchedulerKind::mlwdf;
    }
    if (s == "rr") {
        return SchedulerKind::rr;
    }
    return std::nullopt;
}

class Scheduler {
public:
    virtual ~Scheduler() = default;

    virtual SchedulerKind kind() const = 0;

    /// Pending retransmissions win unconditionally; otherwise the policy decides.
    SchedulerDecision select(const PlanContext& ctx)
    {
        for (const auto& u : ctx.users()) {
            if (u.retx_pending > 0 && !u.queue.empty()) {
                return plan_transmission(u.id, ctx, true);
            }
        }
        return choose(ctx);
    }

    /// Head frames to drop from user u once the slot ends at `slot_end_s`,
    /// given its intermediate HOL delay.
    virtual std::size_t frames_to_drop(const queueing::UserState& u, double z_tilde_ms, double slot_end_s) const = 0;

protected:
    virtual SchedulerDecision choose(const PlanContext& ctx) = 0;
};

class LoScheduler final : public Scheduler {
public:
    explicit LoScheduler(LoParams params = {}) : params_(params) {}

    SchedulerKind kind() const override { return SchedulerKind::lo; }
    const LoParams& params() const noexcept { return params_; }

    std::size_t frames_to_drop(const queueing::UserState& u, double z_tilde_ms, double) const override
    {
        if (u.queue.empty()) {
            return 0;
        }
        const std::size_t n = min_drop_frames(u.queue, params_.epsilon, params_.t_max_s);
        const auto l_bits = static_cast<double>(u.queue.prefix_bits(n));
        return lo_drop(z_tilde_ms, l_bits, params_) > 0.0 ? n : 0;
    }

protected:
    SchedulerDecision choose(const PlanContext& ctx) override
    {
        const auto& users = ctx.users();
        double sum_z = 0.0;
        for (const auto& u : users) {
            sum_z += u.queue.z_ms;
        }

        // Exact pruning: a candidate is planned only while upper bounds on
        // its score, first channel-blind then from its outdated channel, can
        // still reach the incumbent (or beat the idle action).
        const double idle = lo_idle_score(sum_z, params_.v, params_.epsilon, ctx.idle_quantum_s());
        struct Bound {
            UserId user;
            double ub;
        };
        std::vector<Bound> bounds;
        for (const auto& u : users) {
            if (u.queue.empty()) {
                continue;
            }
            const double ub = score_bound(u, sum_z, ctx, ctx.top_rate_bps());
            if (ub > idle) {
                bounds.push_back({u.id, ub});
            }
        }
        std::stable_sort(bounds.begin(), bounds.end(), [](const Bound& a, const Bound& b) { return a.ub > b.ub; });

        std::optional<SchedulerDecision> best;
        for (const auto& [k, ub] : bounds) {
            if (best && ub < best->score) {
                break;
            }
            // Second, channel-aware bound before the full plan.
            const double floor = best ? best->score : idle;
            const double ub_link = score_bound(users[k], sum_z, ctx, ctx.rate_ceiling_bps(k));
            if (ub_link < floor || (!best && ub_link <= idle)) {
                continue;
            }
            auto d = plan_transmission(k, ctx);
            const double z = users[k].queue.z_ms;
            d.score = lo_score(z, sum_z - z, params_.v, params_.epsilon, d.predicted_duration_s, params_.beta, d.b_bits);
            if (d.frames > 0
                && (!best
                    || ranks_before(d.score, z, k, best->score, users[*best->intended].queue.z_ms, *best->intended))) {
                best = std::move(d);
            }
        }

        if (!best || !(best->score > idle)) {
            auto d = idle_decision(ctx.idle_quantum_s());
            d.score = idle;
            return d;
        }
        return *best;
    }

private:
    /// Score ceiling for serving u: a burst of a bits (one frame up to the
    /// TXOP at PHY rate `top`) reaching the intended user plus up to three
    /// members, each needing at most the queued frames it has not yet seen,
    /// over the shortest slot such a burst could take.
    double score_bound(const queueing::UserState& u, double sum_z, const PlanContext& ctx, double top) const
    {
        const auto& q = u.queue;
        if (!(top > 0.0)) {
            return -std::numeric_limits<double>::infinity();
        }
        const double a_min = static_cast<double>(q.front().size_bits);
        const double a_max = std::min(static_cast<double>(q.bits()), ctx.mac().txop_s * top * (1.0 + 1e-12));
        if (a_max < a_min) {
            return -std::numeric_limits<double>::infinity();
        }
        // Largest per-member needs, descending.
        std::array<double, kMaxGroupSize - 1> need{};
        std::size_t members = 0;
        if (ctx.multicast()) {
            const SeqNo last = q[q.size() - 1].seq;
            const auto& frames = q.frames();
            for (UserId s : ctx.subscribers(u.content)) {
                const SeqNo next = ctx.users()[s].next_seq;
                if (s == u.id || next > last) {
                    continue;
                }
                const auto first = std::partition_point(frames.begin(), frames.end(),
                                                        [&](const queueing::Frame& f) { return f.seq < next; });
                const double bits
                    = static_cast<double>(q.bits() - q.prefix_bits(static_cast<std::size_t>(first - frames.begin())));
                // Keep the top three.
                double v = bits;
                for (std::size_t i = 0; i < need.size(); ++i) {
                    if (i >= members || v > need[i]) {
                        std::swap(v, need[i]);
                    }
                }
                members = std::min(members + 1, need.size());
            }
        }

        const double z = q.z_ms;
        double ub = -std::numeric_limits<double>::infinity();
        std::array<double, kMaxGroupSize + 1> breaks{a_min, a_max};
        std::size_t n_breaks = 2;
        for (std::size_t i = 0; i < members; ++i) {
            if (need[i] > a_min && need[i] < a_max) {
                breaks[n_breaks++] = need[i];
            }
        }
        for (std::size_t g = 1; g <= members + 1; ++g) {
            for (std::size_t i = 0; i < n_breaks; ++i) {
                const double a = breaks[i];
                double b = a;
                for (std::size_t m = 0; m + 1 < g; ++m) {
                    b += std::min(a, need[m]);
                }
                const double t = mac::slot_duration(g, a, top, ctx.mac().timing);
                ub = std::max(ub, lo_score(z, sum_z - z, params_.v, params_.epsilon, t, params_.beta, b));
            }
        }
        return ub;
    }

    LoParams params_;
};

class MlwdfScheduler final : public Scheduler {
public:
    explicit MlwdfScheduler(double deadline_ms = 200.0) : deadline_ms_(deadline_ms) {}

    SchedulerKind kind() const override { return SchedulerKind::mlwdf; }

    std::size_t frames_to_drop(const queueing::UserState& u, double, double slot_end_s) const override
    {
        return baseline_deadline_drop(u.queue, deadline_ms_, slot_end_s);
    }

protected:
    SchedulerDecision choose(const PlanContext& ctx) override
    {
        // Visit in descending Z; Z r <= Z r_max bounds the rest.
        const auto& users = ctx.users();
        std::vector<UserId> order;
        for (const auto& u : users) {
            if (!u.queue.empty()) {
                order.push_back(u.id);
            }
        }
        if (order.empty()) {
            return idle_decision(ctx.idle_quantum_s());
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](UserId a, UserId b) { return users[a].queue.z_ms > users[b].queue.z_ms; });
        const double top = ctx.top_rate_bps();
        std::optional<UserId> best;
        double best_score = 0.0;
        for (UserId k : order) {
            const double z = users[k].queue.z_ms;
            if (best && z * top < best_score) {
                break;
            }
            const double s = z * ctx.unicast(k).rate_bps;
            if (!best || ranks_before(s, z, k, best_score, users[*best].queue.z_ms, *best)) {
                best = k;
                best_score = s;
            }
        }
        auto d = plan_transmission(*best, ctx);
        d.score = best_score;
        return d;
    }

private:
    double deadline_ms_;
};

class RrScheduler final : public Scheduler {
public:
    explicit RrScheduler(double deadline_ms = 200.0) : deadline_ms_(deadline_ms) {}

    SchedulerKind kind() const override { return SchedulerKind::rr; }
    std::optional<UserId> cursor() const noexcept { return cursor_; }
    void set_cursor(std::optional<UserId> c) noexcept { cursor_ = c; }

    std::size_t frames_to_drop(const queueing::UserState& u, double, double slot_end_s) const override
    {
        return baseline_deadline_drop(u.queue, deadline_ms_, slot_end_s);
    }

protected:
    SchedulerDecision choose(const PlanContext& ctx) override
    {
        std::vector<bool> nonempty;
        nonempty.reserve(ctx.users().size());
        for (const auto& u : ctx.users()) {
            nonempty.push_back(!u.queue.empty());
        }
        const auto pick = rr_pick(cursor_, nonempty);
        if (!pick) {
            return idle_decision(ctx.idle_quantum_s());
        }
        cursor_ = pick;
        return plan_transmission(*pick, ctx);
    }

private:
    double deadline_ms_;
    std::optional<UserId> cursor_;
};

inline std::unique_ptr<Scheduler> make_scheduler(SchedulerKind kind, const LoParams& lo, double deadline_ms)
{
    switch (kind) {
    case SchedulerKind::lo:
        return std::make_unique<LoScheduler>(lo);
    case SchedulerKind::mlwdf:
        return std::make_unique<MlwdfScheduler>(deadline_ms);
    case SchedulerKind::rr:
        return std::make_unique<RrScheduler>(deadline_ms);
    }
    throw std::invalid_argument("unknown scheduler");
}

} // namespace omcast::sched
