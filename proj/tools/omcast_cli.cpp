// omcast: run sessions, search user capacity, or sweep single-user
// throughput against SNR.
//
// Exit status: 0 on success, 2 on an invalid configuration or command line,
// 1 on any other failure (e.g. an unwritable output directory).

#include "omcast/config.hpp"
#include "omcast/report.hpp"
#include "omcast/sim.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace {

constexpr const char* kConfigEnv = "OMCAST_CONFIG";

struct CommonFlags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::string> scheduler;
    std::optional<std::string> multicast;
    std::optional<std::size_t> users;
    std::optional<std::string> load;
    std::optional<std::size_t> snr_case;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> sessions;
    std::optional<std::string> duration;
    std::optional<std::size_t> k_min;
    std::optional<std::size_t> k_max;
    std::optional<std::string> out;
    std::size_t jobs = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("-c,--config", f.config, std::string("Config file (default: $") + kConfigEnv + ")");
    cmd->add_option("--set", f.sets, "Override any key, e.g. --set lo.v=500")->type_name("KEY=VALUE");
    cmd->add_option("--scheduler", f.scheduler, "lo, mlwdf or rr");
    cmd->add_option("--multicast", f.multicast, "on or off");
    cmd->add_option("--users", f.users, "Number of users K");
    cmd->add_option("--load", f.load, "Per-user load in Mbps");
    cmd->add_option("--case", f.snr_case, "SNR case: 1 (18-45 dB) or 2 (30-45 dB)");
    cmd->add_option("--seed", f.seed, "Master seed");
    cmd->add_option("--sessions", f.sessions, "Sessions per run or capacity probe");
    cmd->add_option("--duration", f.duration, "Session length in seconds");
    cmd->add_option("--k-min", f.k_min, "Capacity search lower bound");
    cmd->add_option("--k-max", f.k_max, "Capacity search upper bound");
    cmd->add_option("-o,--out", f.out, "Output directory");
    cmd->add_option("-j,--jobs", f.jobs, "Worker threads (0: hardware concurrency)");
}

/// Config file, then flags. In capacity mode the scheduler, multicast and load
/// flags narrow the sweep lists instead of the single-run keys.
omcast::config::Settings resolve_settings(const CommonFlags& f, bool capacity_mode)
{
    omcast::config::Settings s;
    std::string path = f.config;
    if (path.empty()) {
        if (const char* env = std::getenv(kConfigEnv); env && *env) {
            path = env;
        }
    }
    if (!path.empty()) {
        s.merge_file(path);
    }
    for (const auto& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw omcast::ConfigError("", "--set expects KEY=VALUE, got '" + kv + "'");
        }
        s.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.scheduler) {
        s.set(capacity_mode ? "capacity.schedulers" : "sim.scheduler", *f.scheduler);
    }
    if (f.multicast) {
        s.set(capacity_mode ? "capacity.multicast" : "sim.multicast", *f.multicast);
    }
    if (f.load) {
        s.set(capacity_mode ? "capacity.loads_mbps" : "traffic.load_mbps", *f.load);
    }
    if (f.users) {
        s.set("sim.users", std::to_string(*f.users));
    }
    if (f.snr_case) {
        s.set("sim.case", std::to_string(*f.snr_case));
    }
    if (f.seed) {
        s.set("sim.seed", std::to_string(*f.seed));
    }
    if (f.sessions) {
        s.set("sim.sessions", std::to_string(*f.sessions));
    }
    if (f.duration) {
        s.set("sim.duration_s", *f.duration);
    }
    if (f.k_min) {
        s.set("sim.k_min", std::to_string(*f.k_min));
    }
    if (f.k_max) {
        s.set("sim.k_max", std::to_string(*f.k_max));
    }
    if (f.out) {
        s.set("out.dir", *f.out);
    }
    return s;
}

std::size_t worker_count(std::size_t requested)
{
    if (requested > 0) {
        return requested;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_run(const CommonFlags& f)
{
    const auto settings = resolve_settings(f, false);
    const auto m = settings.resolve();
    const auto ledgers = omcast::sim::run_sessions(m.scenario, worker_count(f.jobs));
    const std::filesystem::path dir = m.out_dir;
    omcast::report::write_file(dir / "manifest.cfg", settings.to_text());
    omcast::report::write_file(dir / "records.csv", omcast::report::records_csv(ledgers));
    const auto summary = omcast::report::run_summary_csv(m.scenario, ledgers);
    omcast::report::write_file(dir / "summary.csv", summary);
    std::cout << summary;
    return 0;
}

int cmd_capacity(const CommonFlags& f)
{
    const auto settings = resolve_settings(f, true);
    const auto m = settings.resolve();
    std::vector<omcast::report::CapacityRow> rows;
    for (auto kind : m.capacity.schedulers) {
        for (bool mc : m.capacity.multicast) {
            for (double load : m.capacity.loads_mbps) {
                auto cfg = m.scenario;
                cfg.scheduler = kind;
                cfg.multicast = mc;
                cfg.traffic.rate_bps = load * 1e6;
                auto res = omcast::sim::find_capacity(cfg, worker_count(f.jobs));
                std::cout << omcast::sched::to_string(kind) << " multicast=" << (mc ? "on" : "off")
                          << " load=" << omcast::report::fixed(load, 3) << " capacity=" << res.capacity
                          << " cache_p99=" << res.cache_p99 << std::endl;
                rows.push_back({kind, mc, load, std::move(res)});
            }
        }
    }
    const std::filesystem::path dir = m.out_dir;
    omcast::report::write_file(dir / "manifest.cfg", settings.to_text());
    omcast::report::write_file(dir / "capacity.csv", omcast::report::capacity_summary_csv(rows));
    omcast::report::write_file(dir / "probes.csv", omcast::report::capacity_probes_csv(rows));
    return 0;
}

int cmd_sweep(const CommonFlags& f)
{
    const auto settings = resolve_settings(f, false);
    const auto m = settings.resolve();
    const auto rows
        = omcast::sim::sweep_snr(m.scenario, m.sweep.snr_min_db, m.sweep.snr_max_db, m.sweep.snr_step_db, m.sweep.draws);
    const std::filesystem::path dir = m.out_dir;
    omcast::report::write_file(dir / "manifest.cfg", settings.to_text());
    omcast::report::write_file(dir / "sweep.csv", omcast::report::sweep_csv(rows));
    std::cout << "wrote " << rows.size() << " SNR points to " << (dir / "sweep.csv").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Single-AP MIMO-OFDM multicast scheduling simulator"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    CommonFlags cap_flags;
    CommonFlags sweep_flags;
    auto* run = app.add_subcommand("run", "Simulate sessions and write per-user records");
    add_common(run, run_flags);
    auto* cap = app.add_subcommand("capacity", "Binary-search the user capacity per scheduler, multicast mode and load");
    add_common(cap, cap_flags);
    auto* sweep = app.add_subcommand("sweep-snr", "Single-user throughput against SNR per MCS");
    add_common(sweep, sweep_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            return cmd_run(run_flags);
        }
        if (cap->parsed()) {
            return cmd_capacity(cap_flags);
        }
        return cmd_sweep(sweep_flags);
    } catch (const omcast::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
