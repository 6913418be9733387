#pragma once

// Comma-separated result files. Formatting is fixed-precision so that equal
// ledgers always produce identical bytes.

#include "omcast/config.hpp"
#include "omcast/sim.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace omcast::report {

inline std::string fixed(double v, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// One row per (session, user).
inline std::string records_csv(std::span<const sim::MetricsLedger> ledgers)
{
    std::string out = "session,user,content,snr_db,arrived,delivered,late,lost,cache_served,residual,peak_cache,"
                      "mean_delay_ms\n";
    for (const auto& l : ledgers) {
        for (const auto& r : l.users) {
            out += std::to_string(l.session) + ',' + std::to_string(r.user) + ',' + std::to_string(r.content) + ','
                + fixed(r.snr_db, 3) + ',' + std::to_string(r.arrived) + ',' + std::to_string(r.delivered) + ','
                + std::to_string(r.late) + ',' + std::to_string(r.lost) + ',' + std::to_string(r.cache_served) + ','
                + std::to_string(r.residual) + ',' + std::to_string(r.peak_cache) + ',' + fixed(r.mean_delay_ms())
                + '\n';
        }
    }
    return out;
}

inline std::string run_summary_csv(const sim::ScenarioConfig& cfg, std::span<const sim::MetricsLedger> ledgers)
{
    const auto outage = sim::count_outage(ledgers);
    double throughput = 0.0;
    double slot = 0.0;
    for (const auto& l : ledgers) {
        throughput += l.throughput_bps();
        slot += l.mean_slot_s();
    }
    const double n = ledgers.empty() ? 1.0 : static_cast<double>(ledgers.size());
    std::string out = "scheduler,multicast,load_mbps,users,sessions,user_sessions,outage_users,outage_fraction,"
                      "system_outage,cache_p99,throughput_mbps,mean_slot_ms\n";
    out += std::string(sched::to_string(cfg.scheduler)) + ',' + (cfg.multicast ? "on" : "off") + ','
        + fixed(cfg.traffic.rate_bps / 1e6, 3) + ',' + std::to_string(cfg.users) + ',' + std::to_string(ledgers.size())
        + ',' + std::to_string(outage.total) + ',' + std::to_string(outage.outage) + ',' + fixed(outage.fraction(), 6)
        + ',' + (outage.system_outage() ? "yes" : "no") + ','
        + std::to_string(cfg.multicast ? sim::cache_percentile(ledgers) : 0) + ',' + fixed(throughput / n / 1e6) + ','
        + fixed(slot / n * 1e3) + '\n';
    return out;
}

struct CapacityRow {
    sched::SchedulerKind scheduler;
    bool multicast;
    double load_mbps;
    sim::CapacityResult result;
};

/// Table-2/3 layout: one row per (scheduler, multicast, load).
inline std::string capacity_summary_csv(std::span<const CapacityRow> rows)
{
    std::string out = "scheduler,multicast,load_mbps,capacity,cache_p99\n";
    for (const auto& r : rows) {
        out += std::string(sched::to_string(r.scheduler)) + ',' + (r.multicast ? "on" : "off") + ','
            + fixed(r.load_mbps, 3) + ',' + std::to_string(r.result.capacity) + ','
            + std::to_string(r.result.cache_p99) + '\n';
    }
    return out;
}

inline std::string capacity_probes_csv(std::span<const CapacityRow> rows)
{
    std::string out = "scheduler,multicast,load_mbps,users,user_sessions,outage_users,system_outage,cache_p99\n";
    for (const auto& r : rows) {
        for (const auto& p : r.result.probes) {
            out += std::string(sched::to_string(r.scheduler)) + ',' + (r.multicast ? "on" : "off") + ','
                + fixed(r.load_mbps, 3) + ',' + std::to_string(p.users) + ',' + std::to_string(p.outage.total) + ','
                + std::to_string(p.outage.outage) + ',' + (p.outage.system_outage() ? "yes" : "no") + ','
                + std::to_string(p.cache_p99) + '\n';
        }
    }
    return out;
}

/// Throughput in Mbps per fixed MCS and for the adaptive choice.
inline std::string sweep_csv(std::span<const sim::SnrSweepRow> rows)
{
    std::string out = "snr_db";
    const std::size_t mcs = rows.empty() ? 0 : rows.front().fixed_bps.size();
    for (std::size_t m = 0; m < mcs; ++m) {
        out += ",mcs" + std::to_string(m);
    }
    out += ",adaptive\n";
    for (const auto& r : rows) {
        out += fixed(r.snr_db, 2);
        for (double v : r.fixed_bps) {
            out += ',' + fixed(v / 1e6);
        }
        out += ',' + fixed(r.adaptive_bps / 1e6) + '\n';
    }
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out{path, std::ios::binary | std::ios::trunc};
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    out << content;
    if (!out.flush()) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

} // namespace omcast::report
