#pragma once

// Test-only helpers: random small scheduling instances and an exhaustive
// reference scheduler written directly from the slot objective.

#include "omcast/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace omcast::reference {

struct MicroInstance {
    std::vector<queueing::UserState> users;
    std::vector<phy::ChannelMatrix> stale;
    bool multicast = true;

    sched::PlanContext context(const phy::McsTable& mcs, const mac::MacConfig& mac, double idle_s = 5e-4) const
    {
        return sched::PlanContext{users,
                                  [this](UserId k) -> const phy::ChannelMatrix& { return stale.at(k); },
                                  mcs,
                                  phy::NoiseModel{},
                                  phy::PowerNormalization::shared,
                                  mac,
                                  multicast,
                                  idle_s};
    }
};

/// K <= 4 users, at most 3 frames each, two contents, random HOL delays,
/// progress and caches, SNR in [5, 45] dB.
inline MicroInstance random_instance(std::uint64_t seed)
{
    std::mt19937_64 rng{seed};
    auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>{a, b}(rng); };
    auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>{a, b}(rng); };

    MicroInstance inst;
    inst.multicast = pick(0, 3) != 0;
    const auto k_users = static_cast<std::size_t>(pick(1, 4));
    const phy::ChannelModel model;
    inst.users.resize(k_users);
    for (UserId k = 0; k < k_users; ++k) {
        auto& u = inst.users[k];
        u.id = k;
        u.content = pick(0, 1);
        u.snr_db = uni(5.0, 45.0);
        const int frames = pick(0, 3);
        const SeqNo first = pick(0, 4);
        for (int i = 0; i < frames; ++i) {
            u.queue.push(queueing::Frame{u.content, first + i, 8000, 0.016 * i, 0});
        }
        u.next_seq = first + frames + pick(-3, 2);
        if (pick(0, 2) == 0) {
            u.cache.insert({u.content, static_cast<SeqNo>(pick(0, 6))});
        }
        u.queue.z_ms = frames > 0 ? uni(0.0, 260.0) : 0.0;
        if (pick(0, 5) == 0 && frames > 0) {
            u.queue.z_ms = 100.0; // encourage ties
        }
        inst.stale.push_back(phy::draw_channel(model, k, u.snr_db, phy::NoiseModel{}, seed, 0));
    }
    return inst;
}

struct OracleAction {
    std::optional<UserId> intended;
    std::vector<UserId> group;
    std::size_t frames = 0;
    double b_bits = 0.0;
    double t_s = 0.0;
    double score = 0.0;
};

namespace detail {

inline std::optional<int> mcs_of(const std::vector<UserId>& group, const MicroInstance& inst, const phy::McsTable& mcs)
{
    std::vector<const phy::ChannelMatrix*> hs;
    for (auto k : group) {
        hs.push_back(&inst.stale[k]);
    }
    try {
        return phy::evaluate_group(hs, phy::NoiseModel{}, mcs).mcs;
    } catch (const phy::DegenerateChannel&) {
        return std::nullopt;
    }
}

inline bool wants(const queueing::UserState& u, const queueing::Frame& f)
{
    return f.content == u.content && f.seq >= u.next_seq && !u.cache.contains(f.key());
}

/// Frames of k's queue that fit one TXOP at `rate`.
inline std::size_t fit(const queueing::UserQueue& q, double rate, double txop_s)
{
    double bits = 0.0;
    std::size_t n = 0;
    while (n < q.size() && bits + q[n].size_bits <= txop_s * rate * (1.0 + 1e-12)) {
        bits += q[n].size_bits;
        ++n;
    }
    return n;
}

inline double slot_time(std::size_t g, double bits, double rate, const mac::TimingModel& tm)
{
    const double extra = static_cast<double>(g) - 1.0;
    const double us = tm.ndpa_us + tm.sifs_us + tm.ndp_us + tm.sifs_us + tm.csi_fb_us_per_user
        + extra * (tm.csi_poll_us + tm.sifs_us + tm.csi_fb_us_per_user) + tm.data_preamble_us
        + static_cast<double>(g) * (tm.sifs_us + tm.ack_us_per_user) + extra * tm.ack_req_us + tm.difs_us
        + tm.backoff_slots_mean * tm.backoff_slot_us;
    return us * 1e-6 + bits / rate;
}

} // namespace detail

/// What serving k looks like: unicast rate window, top-3 eligible members by
/// grouping metric, members that would gain nothing at the group MCS pruned,
/// then the TXOP-filling burst.
inline OracleAction oracle_plan(UserId k, const MicroInstance& inst, const phy::McsTable& mcs,
                                const mac::MacConfig& mac)
{
    OracleAction a;
    a.intended = k;
    a.group = {k};
    const auto& owner = inst.users[k];
    const auto uni = detail::mcs_of({k}, inst, mcs);
    if (!uni || owner.queue.empty()) {
        return a;
    }
    int chosen = *uni;
    if (inst.multicast) {
        const std::size_t window = detail::fit(owner.queue, mcs.rate_bps(*uni), mac.txop_s);
        std::vector<std::pair<double, UserId>> ranked;
        for (const auto& u : inst.users) {
            if (u.id == k || u.content != owner.content) {
                continue;
            }
            bool any = false;
            for (std::size_t i = 0; i < window; ++i) {
                any = any || detail::wants(u, owner.queue[i]);
            }
            if (any) {
                ranked.emplace_back(-phy::grouping_metric(inst.stale[k], inst.stale[u.id]), u.id);
            }
        }
        std::sort(ranked.begin(), ranked.end());
        std::vector<UserId> group{k};
        for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
            group.push_back(ranked[i].second);
        }
        if (group.size() > 1) {
            auto gm = detail::mcs_of(group, inst, mcs);
            if (gm) {
                const std::size_t n = detail::fit(owner.queue, mcs.rate_bps(*gm), mac.txop_s);
                std::vector<UserId> kept{k};
                for (std::size_t m = 1; m < group.size(); ++m) {
                    bool any = false;
                    for (std::size_t i = 0; i < n; ++i) {
                        any = any || detail::wants(inst.users[group[m]], owner.queue[i]);
                    }
                    if (any) {
                        kept.push_back(group[m]);
                    }
                }
                if (kept.size() != group.size()) {
                    group = kept;
                    gm = detail::mcs_of(group, inst, mcs);
                }
            }
            if (gm) {
                a.group = group;
                chosen = *gm;
            }
        }
    }
    const double rate = mcs.rate_bps(chosen);
    a.frames = detail::fit(owner.queue, rate, mac.txop_s);
    double airtime = 0.0;
    for (std::size_t i = 0; i < a.frames; ++i) {
        const auto& f = owner.queue[i];
        airtime += f.size_bits;
        for (auto s : a.group) {
            if (s == k || detail::wants(inst.users[s], f)) {
                a.b_bits += f.size_bits;
            }
        }
    }
    a.t_s = detail::slot_time(a.group.size(), airtime, rate, mac.timing);
    return a;
}

/// Exhaustive maximization of the slot objective over {idle} and every user
/// with a transmittable burst, ties to larger HOL delay then lower index.
inline OracleAction oracle_select(const MicroInstance& inst, const phy::McsTable& mcs, const mac::MacConfig& mac,
                                  const sched::LoParams& p, double idle_s)
{
    double sum_z = 0.0;
    for (const auto& u : inst.users) {
        sum_z += u.queue.z_ms;
    }
    OracleAction idle;
    idle.t_s = idle_s;
    idle.score = -(sum_z + p.v) * p.epsilon * idle_s;

    std::optional<OracleAction> best;
    for (const auto& u : inst.users) {
        auto a = oracle_plan(u.id, inst, mcs, mac);
        if (a.frames == 0) {
            continue;
        }
        const double z = u.queue.z_ms;
        a.score = z * z - (sum_z - z + p.v) * p.epsilon * a.t_s + p.v * p.beta * a.b_bits;
        if (!best) {
            best = a;
            continue;
        }
        const double bz = inst.users[*best->intended].queue.z_ms;
        if (a.score > best->score || (a.score == best->score && (z > bz || (z == bz && u.id < *best->intended)))) {
            best = a;
        }
    }
    if (best && best->score > idle.score) {
        return *best;
    }
    return idle;
}

/// Drop amount maximizing Z~ * (delay removed) - V beta v d over d in {0, L}
/// when removing L frees the whole intermediate delay; ties drop.
inline double oracle_drop(double z_tilde_ms, double l_bits, const sched::LoParams& p)
{
    const double keep = 0.0;
    const double drop = z_tilde_ms * z_tilde_ms - p.v * p.beta * p.drop_weight * l_bits;
    return drop >= keep ? l_bits : 0.0;
}

} // namespace omcast::reference
