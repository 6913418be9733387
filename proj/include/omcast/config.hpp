#pragma once

// Run manifests: flat `key = value` files with dotted sections, command-line
// overrides, validation with the offending key path, and a canonical echo
// that parses back to the same manifest.

#include "omcast/error.hpp"
#include "omcast/scheduler.hpp"
#include "omcast/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace omcast::config {

struct CapacityPlan {
    std::vector<sched::SchedulerKind> schedulers{sched::SchedulerKind::lo, sched::SchedulerKind::mlwdf,
                                                 sched::SchedulerKind::rr};
    std::vector<bool> multicast{true, false};
    std::vector<double> loads_mbps{0.5, 1.0};

    friend bool operator==(const CapacityPlan&, const CapacityPlan&) = default;
};

struct SweepPlan {
    double snr_min_db = 0.0;
    double snr_max_db = 45.0;
    double snr_step_db = 1.0;
    std::size_t draws = 200;

    friend bool operator==(const SweepPlan&, const SweepPlan&) = default;
};

struct RunManifest {
    sim::ScenarioConfig scenario;
    CapacityPlan capacity;
    SweepPlan sweep;
    std::string out_dir = "results";

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s)
{
    std::vector<std::string_view> out;
    while (true) {
        const auto comma = s.find(',');
        out.push_back(trim(s.substr(0, comma)));
        if (comma == std::string_view::npos) {
            break;
        }
        s.remove_prefix(comma + 1);
    }
    return out;
}

inline std::string format_real(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_real(const std::string& key, std::string_view text)
{
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (text.empty() || res.ec != std::errc{} || res.ptr != end || !std::isfinite(v)) {
        throw ConfigError(key, "expected a number, got '" + std::string(text) + "'");
    }
    return v;
}

inline std::uint64_t parse_unsigned(const std::string& key, std::string_view text)
{
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (text.empty() || res.ec != std::errc{} || res.ptr != end) {
        throw ConfigError(key, "expected a non-negative integer, got '" + std::string(text) + "'");
    }
    return v;
}

inline bool parse_bool(const std::string& key, std::string_view text)
{
    if (text == "true" || text == "on" || text == "yes" || text == "1") {
        return true;
    }
    if (text == "false" || text == "off" || text == "no" || text == "0") {
        return false;
    }
    throw ConfigError(key, "expected true/false, got '" + std::string(text) + "'");
}

inline sched::SchedulerKind parse_scheduler(const std::string& key, std::string_view text)
{
    if (auto k = sched::parse_scheduler(text)) {
        return *k;
    }
    throw ConfigError(key, "expected lo, mlwdf or rr, got '" + std::string(text) + "'");
}

enum class Kind { real, count, boolean, scheduler, text, real_list, bool_list, scheduler_list, normalization, cache };

/// Canonical spelling of a value, so that echo and re-parse agree.
inline std::string normalize(const std::string& key, Kind kind, std::string_view raw)
{
    const auto text = trim(raw);
    auto join = [](const std::vector<std::string>& parts) {
        std::string out;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            out += (i ? "," : "") + parts[i];
        }
        return out;
    };
    switch (kind) {
    case Kind::real:
        return format_real(parse_real(key, text));
    case Kind::count:
        return std::to_string(parse_unsigned(key, text));
    case Kind::boolean:
        return parse_bool(key, text) ? "true" : "false";
    case Kind::scheduler:
        return std::string(sched::to_string(parse_scheduler(key, text)));
    case Kind::text:
        if (text.empty()) {
            throw ConfigError(key, "must not be empty");
        }
        return std::string(text);
    case Kind::real_list: {
        std::vector<std::string> parts;
        for (auto p : split_list(text)) {
            parts.push_back(format_real(parse_real(key, p)));
        }
        return join(parts);
    }
    case Kind::bool_list: {
        std::vector<std::string> parts;
        for (auto p : split_list(text)) {
            parts.emplace_back(parse_bool(key, p) ? "true" : "false");
        }
        return join(parts);
    }
    case Kind::scheduler_list: {
        std::vector<std::string> parts;
        for (auto p : split_list(text)) {
            parts.emplace_back(sched::to_string(parse_scheduler(key, p)));
        }
        return join(parts);
    }
    case Kind::normalization:
        if (text == "shared" || text == "per_subcarrier") {
            return std::string(text);
        }
        throw ConfigError(key, "expected shared or per_subcarrier, got '" + std::string(text) + "'");
    case Kind::cache:
        if (text == "consume" || text == "retain") {
            return std::string(text);
        }
        throw ConfigError(key, "expected consume or retain, got '" + std::string(text) + "'");
    }
    return std::string(text);
}

struct Field {
    std::string_view key;
    Kind kind;
    std::string_view fallback;
    std::function<void(RunManifest&, const std::string& key, const std::string& value)> apply;
};

inline std::vector<double> reals(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    for (auto p : split_list(v)) {
        out.push_back(parse_real(key, p));
    }
    return out;
}

inline const std::vector<Field>& fields()
{
    using M = RunManifest;
    using S = const std::string&;
    auto real = [](S k, S v) { return parse_real(k, v); };
    auto count = [](S k, S v) { return static_cast<std::size_t>(parse_unsigned(k, v)); };
    auto flag = [](S k, S v) { return parse_bool(k, v); };
    static const std::vector<Field> table = {
        {"phy.subcarriers", Kind::count, "52", [=](M& m, S k, S v) { m.scenario.dims.subcarriers = count(k, v); }},
        {"phy.tx_antennas", Kind::count, "4", [=](M& m, S k, S v) { m.scenario.dims.tx = count(k, v); }},
        {"phy.rx_antennas", Kind::count, "1", [=](M& m, S k, S v) { m.scenario.dims.rx = count(k, v); }},
        {"phy.streams", Kind::count, "1", [=](M& m, S k, S v) { m.scenario.dims.streams = count(k, v); }},
        {"phy.taps", Kind::count, "4", [=](M& m, S k, S v) { m.scenario.taps = count(k, v); }},
        {"phy.tap_decay_db", Kind::real, "3", [=](M& m, S k, S v) { m.scenario.tap_decay_db = real(k, v); }},
        {"phy.noise_power", Kind::real, "1", [=](M& m, S k, S v) { m.scenario.noise.n0 = real(k, v); }},
        // The MCS table is assembled once all three of its keys are known.
        {"phy.shannon_gap_db", Kind::real, "3", nullptr},
        {"phy.mcs_efficiency", Kind::real_list, "0.5,1,1.5,2,3,4,4.5,5", nullptr},
        {"phy.mcs_rate_mbps", Kind::real_list, "6.5,13,19.5,26,39,52,58.5,65", nullptr},
        {"phy.normalization", Kind::normalization, "shared",
         [](M& m, S, S v) {
             m.scenario.norm
                 = v == "shared" ? phy::PowerNormalization::shared : phy::PowerNormalization::per_subcarrier;
         }},
        {"phy.error_model", Kind::boolean, "false", [=](M& m, S k, S v) { m.scenario.errors.enabled = flag(k, v); }},
        {"phy.csi_error", Kind::real, "0.1", [=](M& m, S k, S v) { m.scenario.errors.csi_error = real(k, v); }},

        {"mac.ndpa_us", Kind::real, "68", [=](M& m, S k, S v) { m.scenario.mac.timing.ndpa_us = real(k, v); }},
        {"mac.ndp_us", Kind::real, "48", [=](M& m, S k, S v) { m.scenario.mac.timing.ndp_us = real(k, v); }},
        {"mac.csi_feedback_us", Kind::real, "120",
         [=](M& m, S k, S v) { m.scenario.mac.timing.csi_fb_us_per_user = real(k, v); }},
        {"mac.csi_poll_us", Kind::real, "44", [=](M& m, S k, S v) { m.scenario.mac.timing.csi_poll_us = real(k, v); }},
        {"mac.preamble_us", Kind::real, "40",
         [=](M& m, S k, S v) { m.scenario.mac.timing.data_preamble_us = real(k, v); }},
        {"mac.ack_us", Kind::real, "32", [=](M& m, S k, S v) { m.scenario.mac.timing.ack_us_per_user = real(k, v); }},
        {"mac.ack_request_us", Kind::real, "28", [=](M& m, S k, S v) { m.scenario.mac.timing.ack_req_us = real(k, v); }},
        {"mac.sifs_us", Kind::real, "16", [=](M& m, S k, S v) { m.scenario.mac.timing.sifs_us = real(k, v); }},
        {"mac.difs_us", Kind::real, "34", [=](M& m, S k, S v) { m.scenario.mac.timing.difs_us = real(k, v); }},
        {"mac.backoff_slot_us", Kind::real, "9",
         [=](M& m, S k, S v) { m.scenario.mac.timing.backoff_slot_us = real(k, v); }},
        {"mac.backoff_slots_mean", Kind::real, "7.5",
         [=](M& m, S k, S v) { m.scenario.mac.timing.backoff_slots_mean = real(k, v); }},
        {"mac.random_backoff", Kind::boolean, "false",
         [=](M& m, S k, S v) { m.scenario.mac.timing.random_backoff = flag(k, v); }},
        {"mac.txop_ms", Kind::real, "3", [=](M& m, S k, S v) { m.scenario.mac.txop_s = real(k, v) / 1000.0; }},
        {"mac.max_retx", Kind::count, "3",
         [=](M& m, S k, S v) { m.scenario.mac.max_retx = static_cast<int>(std::min<std::size_t>(count(k, v), 1000)); }},

        {"lo.v", Kind::real, "1000", [=](M& m, S k, S v) { m.scenario.lo.v = real(k, v); }},
        {"lo.beta", Kind::real, "4e-05", [=](M& m, S k, S v) { m.scenario.lo.beta = real(k, v); }},
        {"lo.drop_weight", Kind::real, "125", [=](M& m, S k, S v) { m.scenario.lo.drop_weight = real(k, v); }},
        {"lo.epsilon", Kind::real, "1000", [=](M& m, S k, S v) { m.scenario.lo.epsilon = real(k, v); }},
        {"lo.l_max_bits", Kind::real, "8000", [=](M& m, S k, S v) { m.scenario.lo.l_max_bits = real(k, v); }},

        {"traffic.contents", Kind::count, "10",
         [=](M& m, S k, S v) { m.scenario.traffic.contents = static_cast<int>(std::min<std::size_t>(count(k, v), 1u << 20)); }},
        {"traffic.frame_bytes", Kind::count, "1000",
         [=](M& m, S k, S v) {
             m.scenario.traffic.frame_bits = static_cast<std::uint32_t>(std::min<std::size_t>(count(k, v), 1u << 24) * 8);
         }},
        {"traffic.load_mbps", Kind::real, "0.5", [=](M& m, S k, S v) { m.scenario.traffic.rate_bps = real(k, v) * 1e6; }},
        {"traffic.on_s", Kind::real, "2", [=](M& m, S k, S v) { m.scenario.traffic.on_s = real(k, v); }},
        {"traffic.off_s", Kind::real, "1", [=](M& m, S k, S v) { m.scenario.traffic.off_s = real(k, v); }},
        {"traffic.start_spread_s", Kind::real, "0.5",
         [=](M& m, S k, S v) { m.scenario.traffic.start_spread_s = real(k, v); }},

        {"sim.case", Kind::count, "1",
         [=](M& m, S k, S v) { m.scenario.snr_case = static_cast<int>(std::min<std::size_t>(count(k, v), 100)); }},
        {"sim.users", Kind::count, "20", [=](M& m, S k, S v) { m.scenario.users = count(k, v); }},
        {"sim.scheduler", Kind::scheduler, "lo", [](M& m, S k, S v) { m.scenario.scheduler = parse_scheduler(k, v); }},
        {"sim.multicast", Kind::boolean, "true", [=](M& m, S k, S v) { m.scenario.multicast = flag(k, v); }},
        {"sim.duration_s", Kind::real, "30", [=](M& m, S k, S v) { m.scenario.duration_s = real(k, v); }},
        {"sim.sessions", Kind::count, "100", [=](M& m, S k, S v) { m.scenario.sessions = count(k, v); }},
        {"sim.seed", Kind::count, "1", [](M& m, S k, S v) { m.scenario.seed = parse_unsigned(k, v); }},
        {"sim.deadline_ms", Kind::real, "200", [=](M& m, S k, S v) { m.scenario.deadline_ms = real(k, v); }},
        {"sim.idle_quantum_ms", Kind::real, "0.5",
         [=](M& m, S k, S v) { m.scenario.idle_quantum_s = real(k, v) / 1000.0; }},
        {"sim.cache_policy", Kind::cache, "consume",
         [](M& m, S, S v) {
             m.scenario.cache_policy = v == "consume" ? queueing::CacheRelease::consume : queueing::CacheRelease::retain;
         }},
        {"sim.k_min", Kind::count, "1", [=](M& m, S k, S v) { m.scenario.k_min = count(k, v); }},
        {"sim.k_max", Kind::count, "100", [=](M& m, S k, S v) { m.scenario.k_max = count(k, v); }},

        {"capacity.schedulers", Kind::scheduler_list, "lo,mlwdf,rr",
         [](M& m, S k, S v) {
             m.capacity.schedulers.clear();
             for (auto p : split_list(v)) {
                 m.capacity.schedulers.push_back(parse_scheduler(k, p));
             }
         }},
        {"capacity.multicast", Kind::bool_list, "true,false",
         [](M& m, S k, S v) {
             m.capacity.multicast.clear();
             for (auto p : split_list(v)) {
                 m.capacity.multicast.push_back(parse_bool(k, p));
             }
         }},
        {"capacity.loads_mbps", Kind::real_list, "0.5,1", [](M& m, S k, S v) { m.capacity.loads_mbps = reals(k, v); }},

        {"sweep.snr_min_db", Kind::real, "0", [=](M& m, S k, S v) { m.sweep.snr_min_db = real(k, v); }},
        {"sweep.snr_max_db", Kind::real, "45", [=](M& m, S k, S v) { m.sweep.snr_max_db = real(k, v); }},
        {"sweep.snr_step_db", Kind::real, "1", [=](M& m, S k, S v) { m.sweep.snr_step_db = real(k, v); }},
        {"sweep.draws", Kind::count, "200", [=](M& m, S k, S v) { m.sweep.draws = count(k, v); }},

        {"out.dir", Kind::text, "results", [](M& m, S, S v) { m.out_dir = v; }},
    };
    return table;
}

inline const Field* find_field(std::string_view key)
{
    for (const auto& f : fields()) {
        if (f.key == key) {
            return &f;
        }
    }
    return nullptr;
}

inline void build_mcs(RunManifest& m, const std::map<std::string, std::string, std::less<>>& values)
{
    const auto eff = reals("phy.mcs_efficiency", values.at("phy.mcs_efficiency"));
    const auto rate = reals("phy.mcs_rate_mbps", values.at("phy.mcs_rate_mbps"));
    const double gap = parse_real("phy.shannon_gap_db", values.at("phy.shannon_gap_db"));
    auto check = [](const std::vector<double>& v, const char* key) {
        if (v.size() != phy::McsTable::kEntries) {
            throw ConfigError(key, "needs exactly 8 entries");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0)) {
                throw ConfigError(key, "entries must be positive");
            }
            if (i > 0 && !(v[i] > v[i - 1])) {
                throw ConfigError(key, "entries must be strictly increasing");
            }
        }
    };
    check(eff, "phy.mcs_efficiency");
    check(rate, "phy.mcs_rate_mbps");
    if (!(gap >= 0.0)) {
        throw ConfigError("phy.shannon_gap_db", "must be non-negative");
    }
    m.scenario.mcs = phy::McsTable{eff, rate, gap};
}

inline void validate_plans(const RunManifest& m)
{
    if (m.capacity.schedulers.empty()) {
        throw ConfigError("capacity.schedulers", "must not be empty");
    }
    for (double l : m.capacity.loads_mbps) {
        if (!(l >= 0.0)) {
            throw ConfigError("capacity.loads_mbps", "loads must be non-negative");
        }
    }
    if (!(m.sweep.snr_step_db > 0.0)) {
        throw ConfigError("sweep.snr_step_db", "must be positive");
    }
    if (m.sweep.snr_max_db < m.sweep.snr_min_db) {
        throw ConfigError("sweep.snr_max_db", "must not be below sweep.snr_min_db");
    }
    if (m.sweep.draws == 0) {
        throw ConfigError("sweep.draws", "must be at least 1");
    }
}

} // namespace detail

/// Resolved key/value pairs; every known key present, values canonical.
class Settings {
public:
    Settings()
    {
        for (const auto& f : detail::fields()) {
            values_.emplace(std::string(f.key), std::string(f.fallback));
        }
    }

    /// Sets one key. Unknown keys and malformed values throw ConfigError.
    void set(std::string_view key, std::string_view value)
    {
        const auto* f = detail::find_field(key);
        if (!f) {
            throw ConfigError(std::string(key), "unknown key");
        }
        const std::string k{key};
        values_[k] = detail::normalize(k, f->kind, value);
    }

    const std::string& get(std::string_view key) const
    {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            throw ConfigError(std::string(key), "unknown key");
        }
        return it->second;
    }

    /// Reads `key = value` lines; '#' starts a comment.
    void merge_text(std::string_view text, std::string_view origin = "config")
    {
        std::size_t line_no = 0;
        while (!text.empty()) {
            ++line_no;
            const auto nl = text.find('\n');
            auto line = text.substr(0, nl);
            text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
            if (const auto hash = line.find('#'); hash != std::string_view::npos) {
                line = line.substr(0, hash);
            }
            line = detail::trim(line);
            if (line.empty()) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("", std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
            }
            set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        }
    }

    void merge_file(const std::string& path)
    {
        std::ifstream in{path};
        if (!in) {
            throw ConfigError("", "cannot read config file '" + path + "'");
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        merge_text(buf.str(), path);
    }

    /// Canonical echo, one key per line in a fixed order.
    std::string to_text() const
    {
        std::string out;
        for (const auto& f : detail::fields()) {
            out += std::string(f.key) + " = " + get(f.key) + "\n";
        }
        return out;
    }

    /// Builds and validates the manifest.
    RunManifest resolve() const
    {
        RunManifest m;
        for (const auto& f : detail::fields()) {
            if (f.apply) {
                const std::string k{f.key};
                f.apply(m, k, get(f.key));
            }
        }
        detail::build_mcs(m, values_);
        m.scenario.validate();
        detail::validate_plans(m);
        return m;
    }

    friend bool operator==(const Settings&, const Settings&) = default;

private:
    std::map<std::string, std::string, std::less<>> values_;
};

/// File (optional) then overrides, in order.
inline RunManifest parse_config(std::string_view text, const std::vector<std::pair<std::string, std::string>>& overrides = {})
{
    Settings s;
    s.merge_text(text);
    for (const auto& [k, v] : overrides) {
        s.set(k, v);
    }
    return s.resolve();
}

} // namespace omcast::config
