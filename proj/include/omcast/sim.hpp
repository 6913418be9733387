#pragma once

// Slot loop, per-user metrics, outage evaluation and user-capacity search.

#include "omcast/error.hpp"
#include "omcast/mac.hpp"
#include "omcast/phy.hpp"
#include "omcast/queueing.hpp"
#include "omcast/rng.hpp"
#include "omcast/scheduler.hpp"
#include "omcast/traffic.hpp"
#include "omcast/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace omcast::sim {

struct SnrRange {
    double lo_db;
    double hi_db;
};

/// Case 1: 18-45 dB, case 2: 30-45 dB.
inline SnrRange snr_range(int snr_case)
{
    switch (snr_case) {
    case 1:
        return {18.0, 45.0};
    case 2:
        return {30.0, 45.0};
    default:
        throw ConfigError("sim.case", "must be 1 or 2");
    }
}

struct ScenarioConfig {
    // phy
    phy::Dimensions dims;
    std::size_t taps = 4;
    double tap_decay_db = 3.0;
    phy::NoiseModel noise;
    phy::McsTable mcs;
    phy::PowerNormalization norm = phy::PowerNormalization::shared;
    mac::ErrorModel errors;
    // mac
    mac::MacConfig mac;
    // lo
    sched::LoParams lo;
    // traffic
    traffic::TrafficConfig traffic;
    // sim
    int snr_case = 1;
    std::size_t users = 20;
    sched::SchedulerKind scheduler = sched::SchedulerKind::lo;
    bool multicast = true;
    double duration_s = 30.0;
    std::size_t sessions = 100;
    std::uint64_t seed = 1;
    double deadline_ms = 200.0;
    double idle_quantum_s = 5e-4;
    queueing::CacheRelease cache_policy = queueing::CacheRelease::consume;
    std::size_t k_min = 1;
    std::size_t k_max = 100;

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;

    /// Throws ConfigError naming the first offending key.
    void validate() const
    {
        auto positive = [](double v, const char* key) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw ConfigError(key, "must be positive");
            }
        };
        auto non_negative = [](double v, const char* key) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw ConfigError(key, "must be non-negative");
            }
        };
        if (dims.subcarriers == 0) {
            throw ConfigError("phy.subcarriers", "must be positive");
        }
        if (dims.tx == 0) {
            throw ConfigError("phy.tx_antennas", "must be positive");
        }
        if (dims.rx == 0) {
            throw ConfigError("phy.rx_antennas", "must be positive");
        }
        if (dims.streams != dims.rx) {
            throw ConfigError("phy.streams", "must equal phy.rx_antennas");
        }
        if (taps == 0) {
            throw ConfigError("phy.taps", "must be positive");
        }
        non_negative(tap_decay_db, "phy.tap_decay_db");
        positive(noise.n0, "phy.noise_power");
        if (!(errors.csi_error >= 0.0 && errors.csi_error <= 1.0)) {
            throw ConfigError("phy.csi_error", "must lie in [0, 1]");
        }
        const auto& tm = mac.timing;
        non_negative(tm.ndpa_us, "mac.ndpa_us");
        non_negative(tm.ndp_us, "mac.ndp_us");
        non_negative(tm.csi_fb_us_per_user, "mac.csi_feedback_us");
        non_negative(tm.csi_poll_us, "mac.csi_poll_us");
        non_negative(tm.data_preamble_us, "mac.preamble_us");
        non_negative(tm.ack_us_per_user, "mac.ack_us");
        non_negative(tm.ack_req_us, "mac.ack_request_us");
        non_negative(tm.sifs_us, "mac.sifs_us");
        non_negative(tm.difs_us, "mac.difs_us");
        non_negative(tm.backoff_slot_us, "mac.backoff_slot_us");
        non_negative(tm.backoff_slots_mean, "mac.backoff_slots_mean");
        positive(mac.txop_s, "mac.txop_ms");
        if (mac.max_retx < 0) {
            throw ConfigError("mac.max_retx", "must be non-negative");
        }
        positive(lo.v, "lo.v");
        positive(lo.beta, "lo.beta");
        positive(lo.drop_weight, "lo.drop_weight");
        positive(lo.epsilon, "lo.epsilon");
        positive(lo.l_max_bits, "lo.l_max_bits");
        if (traffic.contents < 1) {
            throw ConfigError("traffic.contents", "must be at least 1");
        }
        if (traffic.frame_bits == 0) {
            throw ConfigError("traffic.frame_bytes", "must be positive");
        }
        non_negative(traffic.rate_bps, "traffic.load_mbps");
        positive(traffic.on_s, "traffic.on_s");
        non_negative(traffic.off_s, "traffic.off_s");
        non_negative(traffic.start_spread_s, "traffic.start_spread_s");
        snr_range(snr_case);
        if (users == 0) {
            throw ConfigError("sim.users", "must be at least 1");
        }
        positive(duration_s, "sim.duration_s");
        if (sessions == 0) {
            throw ConfigError("sim.sessions", "must be at least 1");
        }
        positive(deadline_ms, "sim.deadline_ms");
        positive(idle_quantum_s, "sim.idle_quantum_ms");
        if (k_min == 0) {
            throw ConfigError("sim.k_min", "must be at least 1");
        }
        if (k_min > k_max) {
            throw ConfigError("sim.k_max", "must not be below sim.k_min");
        }
    }
};

/// Delay histogram bins: 10 ms wide, the last one open-ended.
inline constexpr double kDelayBinMs = 10.0;
inline constexpr std::size_t kDelayBins = 51;

struct UserRecord {
    UserId user = 0;
    ContentId content = 0;
    double snr_db = 0.0;
    std::uint64_t arrived = 0;
    std::uint64_t delivered = 0;
    std::uint64_t late = 0;
    std::uint64_t lost = 0;
    std::uint64_t cache_served = 0;
    std::uint64_t residual = 0;
    std::size_t peak_cache = 0;
    double delay_sum_ms = 0.0;
    std::vector<std::uint64_t> delay_hist = std::vector<std::uint64_t>(kDelayBins, 0);

    double mean_delay_ms() const { return delivered == 0 ? 0.0 : delay_sum_ms / static_cast<double>(delivered); }

    bool conserved() const { return arrived == delivered + lost + cache_served + residual; }

    void record_delivery(double delay_ms, double deadline_ms)
    {
        ++delivered;
        delay_sum_ms += delay_ms;
        if (delay_ms > deadline_ms) {
            ++late;
        }
        const auto bin = static_cast<std::size_t>(std::max(0.0, delay_ms) / kDelayBinMs);
        ++delay_hist[std::min(bin, kDelayBins - 1)];
    }

    friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

struct MetricsLedger {
    std::size_t session = 0;
    std::uint64_t seed = 0;
    std::vector<UserRecord> users;
    std::uint64_t slots = 0;
    std::uint64_t idle_slots = 0;
    std::uint64_t silent_slots = 0; // sounded but no MCS fit
    double sim_time_s = 0.0;
    double delivered_bits = 0.0;    // ACKed by intended users
    double overheard_bits = 0.0;    // cached by unintended members
    double max_z_ms = 0.0;
    double max_delivery_delay_ms = 0.0;
    std::uint64_t hol_mismatches = 0; // recursion disagreeing with the true HOL age

    double throughput_bps() const { return sim_time_s > 0.0 ? (delivered_bits + overheard_bits) / sim_time_s : 0.0; }
    double mean_slot_s() const { return slots > 0 ? sim_time_s / static_cast<double>(slots) : 0.0; }

    friend bool operator==(const MetricsLedger&, const MetricsLedger&) = default;
};

/// Lazily drawn block-fading channels for the current and previous epoch.
class ChannelStore {
public:
    ChannelStore(const phy::ChannelModel& model, std::vector<double> gains, std::uint64_t seed)
        : model_(model), gains_(std::move(gains)), seed_(seed)
    {
        for (auto& row : rows_) {
            row.resize(gains_.size());
        }
    }

    const phy::ChannelMatrix& get(UserId user, std::uint64_t epoch)
    {
        const auto idx = epoch & 1U;
        auto& row = rows_[idx];
        if (epoch_[idx] != epoch) {
            for (auto& h : row) {
                h.reset();
            }
            epoch_[idx] = epoch;
        }
        auto& h = row.at(user);
        if (!h) {
            h = model_.draw(user, gains_[user], seed_, epoch);
        }
        return *h;
    }

private:
    const phy::ChannelModel& model_;
    std::vector<double> gains_;
    std::uint64_t seed_;
    std::vector<std::optional<phy::ChannelMatrix>> rows_[2];
    std::uint64_t epoch_[2] = {std::numeric_limits<std::uint64_t>::max(), std::numeric_limits<std::uint64_t>::max()};
};

inline std::unique_ptr<sched::Scheduler> make_scheduler(const ScenarioConfig& cfg)
{
    auto lo = cfg.lo;
    lo.t_max_s = cfg.mac.txop_s;
    return sched::make_scheduler(cfg.scheduler, lo, cfg.deadline_ms);
}

/// One replication. Deterministic in (cfg, seed).
inline MetricsLedger run_session(const ScenarioConfig& cfg, std::uint64_t seed, std::size_t session = 0)
{
    cfg.validate();
    const std::size_t k_users = cfg.users;
    const auto flows = traffic::assign_contents(k_users, cfg.traffic, seed);
    const auto range = snr_range(cfg.snr_case);

    MetricsLedger ledger;
    ledger.session = session;
    ledger.seed = seed;
    ledger.users.resize(k_users);

    std::vector<queueing::UserState> users(k_users);
    std::vector<traffic::FlowCursor> cursors;
    cursors.reserve(k_users);
    std::vector<double> gains(k_users);
    {
        auto eng = make_engine(seed, Stream::snr);
        std::uniform_real_distribution<double> snr{range.lo_db, range.hi_db};
        for (UserId k = 0; k < k_users; ++k) {
            auto& u = users[k];
            u.id = k;
            u.content = flows[k].content;
            u.snr_db = snr(eng);
            u.cache = queueing::UserCache{cfg.cache_policy};
            gains[k] = phy::db_to_linear(u.snr_db) * cfg.noise.n0;
            cursors.emplace_back(flows[k]);
            auto& rec = ledger.users[k];
            rec.user = k;
            rec.content = u.content;
            rec.snr_db = u.snr_db;
        }
    }

    const phy::ChannelModel model{cfg.dims, cfg.taps, cfg.tap_decay_db};
    ChannelStore channels{model, gains, seed};
    auto scheduler = make_scheduler(cfg);
    const double eps = cfg.lo.epsilon;

    mac::LinkContext link;
    link.model = &model;
    link.mcs = &cfg.mcs;
    link.noise = cfg.noise;
    link.norm = cfg.norm;
    link.mac = cfg.mac;
    link.errors = cfg.errors;
    link.seed = seed;

    double t = 0.0;
    std::uint64_t epoch = 0;
    std::vector<bool> served(k_users);
    std::vector<double> gap(k_users);

    while (t < cfg.duration_s) {
        const std::uint64_t stale_epoch = epoch == 0 ? 0 : epoch - 1;
        sched::PlanContext ctx{users,
                               [&](UserId k) -> const phy::ChannelMatrix& { return channels.get(k, stale_epoch); },
                               cfg.mcs,
                               cfg.noise,
                               cfg.norm,
                               cfg.mac,
                               cfg.multicast,
                               cfg.idle_quantum_s};
        const auto decision = scheduler->select(ctx);

        std::fill(served.begin(), served.end(), false);
        double duration = 0.0;
        if (decision.idle()) {
            duration = decision.predicted_duration_s;
            ++ledger.idle_slots;
        } else {
            link.epoch = epoch;
            const auto out = mac::transact(
                decision, users, [&](UserId k) -> const phy::ChannelMatrix& { return channels.get(k, epoch); }, link);
            duration = out.duration_s;
            if (!out.mcs) {
                ++ledger.silent_slots;
            }
            const UserId k = *decision.intended;
            auto& rec = ledger.users[k];
            for (const auto& f : out.delivered) {
                const double delay = (t - f.arrival_s) * kMsPerSecond;
                rec.record_delivery(delay, cfg.deadline_ms);
                ledger.max_delivery_delay_ms = std::max(ledger.max_delivery_delay_ms, delay);
            }
            rec.lost += out.exhausted.size();
            ledger.delivered_bits += out.intended_bits;
            ledger.overheard_bits += out.b_total_bits - out.intended_bits;
            if (!out.delivered.empty() || !out.exhausted.empty()) {
                served[k] = true;
                gap[k] = out.hol_gap_ms;
            }
        }

        // HOL recursions. M is taken net of the slot's aging so that Z~ is the
        // HOL age at the end of the slot.
        const double t_end = t + duration;
        for (UserId k = 0; k < k_users; ++k) {
            auto& u = users[k];
            auto& q = u.queue;
            const double m_served = served[k] ? gap[k] - eps * duration : 0.0;
            const double ps = queueing::psi(served[k], m_served, q.z_ms, duration, eps);
            q.z_tilde_ms = queueing::update_intermediate_hol(q.z_ms, ps);
            if (q.empty()) {
                q.z_tilde_ms = 0.0;
            }
            const std::size_t drop = std::min(scheduler->frames_to_drop(u, q.z_tilde_ms, t_end), q.size());
            double m_drop = 0.0;
            if (drop > 0) {
                m_drop = q.hol_gap_ms(drop, std::numeric_limits<double>::infinity());
                q.pop_front(drop);
                ledger.users[k].lost += drop;
                if (u.retx_pending > 0) {
                    u.retx_pending = u.retx_pending > drop ? u.retx_pending - drop : 0;
                }
            }
            q.z_ms = queueing::update_hol(q.z_tilde_ms, queueing::phi(drop > 0, m_drop, q.z_tilde_ms));
            if (!q.empty() && std::abs(q.z_ms - q.hol_age_ms(t_end)) > 1e-6) {
                ++ledger.hol_mismatches;
            }
        }

        // Arrivals in [t, t_end) join the queues at the end of the slot.
        for (UserId k = 0; k < k_users; ++k) {
            auto& u = users[k];
            auto& rec = ledger.users[k];
            cursors[k].emit_until(t_end, [&](const queueing::Frame& f) {
                ++rec.arrived;
                u.next_seq = f.seq + 1;
                if (queueing::enqueue(u.queue, f, u.cache) == queueing::EnqueueResult::cache_served) {
                    ++rec.cache_served;
                }
            });
            u.queue.z_ms = u.queue.hol_age_ms(t_end);
            ledger.max_z_ms = std::max(ledger.max_z_ms, u.queue.z_ms);
        }

        t = t_end;
        ++epoch;
        ++ledger.slots;
    }

    ledger.sim_time_s = t;
    for (UserId k = 0; k < k_users; ++k) {
        auto& rec = ledger.users[k];
        rec.residual = users[k].queue.size();
        rec.peak_cache = users[k].cache.peak();
    }
    return ledger;
}

inline std::uint64_t session_seed(std::uint64_t seed, std::size_t session)
{
    return derive_seed(seed, {static_cast<std::uint64_t>(Stream::session), session});
}

/// cfg.sessions independent replications, returned in session order.
inline std::vector<MetricsLedger> run_sessions(const ScenarioConfig& cfg, std::size_t jobs = 1)
{
    cfg.validate();
    std::vector<MetricsLedger> out(cfg.sessions);
    jobs = std::clamp<std::size_t>(jobs, 1, cfg.sessions);
    if (jobs == 1) {
        for (std::size_t s = 0; s < cfg.sessions; ++s) {
            out[s] = run_session(cfg, session_seed(cfg.seed, s), s);
        }
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
        pool.emplace_back([&] {
            for (std::size_t s = next++; s < cfg.sessions; s = next++) {
                try {
                    out[s] = run_session(cfg, session_seed(cfg.seed, s), s);
                } catch (...) {
                    std::lock_guard lock{failure_lock};
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

/// More than 1% of the user's frames lost or late.
inline bool user_outage(const UserRecord& r)
{
    if (r.arrived == 0) {
        return false;
    }
    return static_cast<double>(r.lost + r.late) > 0.01 * static_cast<double>(r.arrived);
}

struct OutageCount {
    std::size_t outage = 0;
    std::size_t total = 0;

    bool system_outage() const { return static_cast<double>(outage) > 0.01 * static_cast<double>(total); }
    double fraction() const { return total == 0 ? 0.0 : static_cast<double>(outage) / static_cast<double>(total); }
};

/// Pooled over every user of every session.
inline OutageCount count_outage(std::span<const MetricsLedger> ledgers)
{
    OutageCount c;
    for (const auto& l : ledgers) {
        for (const auto& r : l.users) {
            ++c.total;
            c.outage += user_outage(r) ? 1 : 0;
        }
    }
    return c;
}

inline bool system_outage(std::span<const MetricsLedger> ledgers) { return count_outage(ledgers).system_outage(); }

/// Largest K in [k_min, k_max] for which `passes(K)` holds, assuming passes
/// is monotone nonincreasing in K; k_min - 1 if even k_min fails.
template <class Passes>
std::size_t capacity_search(std::size_t k_min, std::size_t k_max, Passes&& passes)
{
    if (k_min > k_max) {
        throw std::invalid_argument("capacity search needs k_min <= k_max");
    }
    std::size_t good = k_min - 1; // known to pass (or sentinel)
    std::size_t bad = k_max + 1;  // known to fail (or sentinel)
    while (bad - good > 1) {
        const std::size_t mid = good + (bad - good) / 2;
        if (passes(mid)) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    return good;
}

/// Nearest-rank 99th percentile.
inline std::size_t cache_percentile(std::vector<std::size_t> peaks)
{
    if (peaks.empty()) {
        return 0;
    }
    std::sort(peaks.begin(), peaks.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(peaks.size())));
    return peaks[std::max<std::size_t>(rank, 1) - 1];
}

inline std::size_t cache_percentile(std::span<const MetricsLedger> ledgers)
{
    std::vector<std::size_t> peaks;
    for (const auto& l : ledgers) {
        for (const auto& r : l.users) {
            peaks.push_back(r.peak_cache);
        }
    }
    return cache_percentile(std::move(peaks));
}

struct CapacityProbe {
    std::size_t users = 0;
    OutageCount outage;
    std::size_t cache_p99 = 0;
};

struct CapacityResult {
    std::size_t capacity = 0;
    std::size_t cache_p99 = 0; // at the capacity point; 0 below k_min
    std::vector<CapacityProbe> probes;
};

/// Binary search over cfg.users in [cfg.k_min, cfg.k_max].
inline CapacityResult find_capacity(ScenarioConfig cfg, std::size_t jobs = 1)
{
    cfg.validate();
    CapacityResult res;
    res.capacity = capacity_search(cfg.k_min, cfg.k_max, [&](std::size_t k) {
        cfg.users = k;
        const auto ledgers = run_sessions(cfg, jobs);
        CapacityProbe p;
        p.users = k;
        p.outage = count_outage(ledgers);
        p.cache_p99 = cfg.multicast ? cache_percentile(ledgers) : 0;
        res.probes.push_back(p);
        return !p.outage.system_outage();
    });
    for (const auto& p : res.probes) {
        if (p.users == res.capacity) {
            res.cache_p99 = p.cache_p99;
        }
    }
    return res;
}

struct SnrSweepRow {
    double snr_db = 0.0;
    std::vector<double> fixed_bps; // per MCS
    double adaptive_bps = 0.0;
};

/// Single-user MAC throughput against SNR for every fixed MCS and for the
/// adaptive choice, averaged over `draws` channel realizations. A full TXOP
/// burst is sent whenever the MCS fits the channel's mean capacity.
inline std::vector<SnrSweepRow> sweep_snr(const ScenarioConfig& cfg, double lo_db, double hi_db, double step_db,
                                          std::size_t draws)
{
    if (!(step_db > 0.0) || hi_db < lo_db) {
        throw std::invalid_argument("sweep needs lo <= hi and a positive step");
    }
    if (draws == 0) {
        throw std::invalid_argument("sweep needs at least one draw");
    }
    const phy::ChannelModel model{cfg.dims, cfg.taps, cfg.tap_decay_db};
    const auto& table = cfg.mcs;
    std::vector<double> full_burst(table.size());
    for (std::size_t m = 0; m < table.size(); ++m) {
        const double rate = table.rate_bps(static_cast<int>(m));
        const double frames = std::floor(cfg.mac.txop_s * rate / cfg.traffic.frame_bits * (1.0 + 1e-12));
        const double bits = frames * cfg.traffic.frame_bits;
        full_burst[m] = bits / mac::slot_duration(1, bits, rate, cfg.mac.timing);
    }

    std::vector<SnrSweepRow> rows;
    const auto points = static_cast<std::size_t>(std::floor((hi_db - lo_db) / step_db + 1e-9)) + 1;
    for (std::size_t i = 0; i < points; ++i) {
        SnrSweepRow row;
        row.snr_db = lo_db + static_cast<double>(i) * step_db;
        row.fixed_bps.assign(table.size(), 0.0);
        const double gain = phy::db_to_linear(row.snr_db) * cfg.noise.n0;
        for (std::size_t d = 0; d < draws; ++d) {
            const auto h = model.draw(0, gain, cfg.seed, d);
            const phy::ChannelMatrix* hp = &h;
            const auto link = phy::evaluate_group(std::span<const phy::ChannelMatrix* const>{&hp, 1}, cfg.noise, table, cfg.norm);
            if (!link.mcs) {
                continue;
            }
            for (int m = 0; m <= *link.mcs; ++m) {
                row.fixed_bps[static_cast<std::size_t>(m)] += full_burst[static_cast<std::size_t>(m)];
            }
            row.adaptive_bps += full_burst[static_cast<std::size_t>(*link.mcs)];
        }
        for (auto& v : row.fixed_bps) {
            v /= static_cast<double>(draws);
        }
        row.adaptive_bps /= static_cast<double>(draws);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace omcast::sim
