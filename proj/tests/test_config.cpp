#include "omcast/config.hpp"
#include "omcast/report.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <string>

using namespace omcast;
using namespace omcast::config;

namespace {

std::string error_key(const std::string& text, std::vector<std::pair<std::string, std::string>> overrides = {})
{
    try {
        parse_config(text, overrides);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST(Parse, EmptyFileGivesDefaults)
{
    const auto m = parse_config("");
    EXPECT_EQ(m, RunManifest{});
    const auto& s = m.scenario;
    EXPECT_EQ(s.traffic.frame_bits, 8000u);
    EXPECT_EQ(s.mac.txop_s, 3e-3);
    EXPECT_EQ(s.mac.max_retx, 3);
    EXPECT_EQ(s.deadline_ms, 200.0);
    EXPECT_EQ(s.lo.epsilon, 1000.0);
    EXPECT_EQ(s.lo.beta, 4e-5);
    EXPECT_EQ(s.lo.v, 1000.0);
    EXPECT_EQ(s.lo.drop_weight, 125.0);
}

TEST(Parse, OverrideWinsOverFile)
{
    const auto m = parse_config("sim.users = 20\n", {{"sim.users", "57"}});
    EXPECT_EQ(m.scenario.users, 57u);
}

TEST(Parse, FileValuesApply)
{
    const auto m = parse_config("# comment\n"
                                "lo.v = 500   # trailing\n"
                                "sim.scheduler = mlwdf\n"
                                "sim.multicast = off\n"
                                "traffic.load_mbps = 2\n"
                                "mac.txop_ms = 4\n");
    EXPECT_EQ(m.scenario.lo.v, 500.0);
    EXPECT_EQ(m.scenario.scheduler, sched::SchedulerKind::mlwdf);
    EXPECT_FALSE(m.scenario.multicast);
    EXPECT_EQ(m.scenario.traffic.rate_bps, 2e6);
    EXPECT_EQ(m.scenario.mac.txop_s, 4e-3);
}

TEST(Parse, ErrorsNameTheKey)
{
    EXPECT_EQ(error_key("traffic.load_mbps = -1\n"), "traffic.load_mbps");
    EXPECT_EQ(error_key("", {{"traffic.load_mbps", "-0.5"}}), "traffic.load_mbps");
    EXPECT_EQ(error_key("phy.bogus = 1\n"), "phy.bogus");
    EXPECT_EQ(error_key("sim.users = many\n"), "sim.users");
    EXPECT_EQ(error_key("sim.scheduler = pf\n"), "sim.scheduler");
    EXPECT_EQ(error_key("sim.case = 3\n"), "sim.case");
    EXPECT_EQ(error_key("phy.mcs_rate_mbps = 6.5,13,19.5,26,39,52,52,65\n"), "phy.mcs_rate_mbps");
    EXPECT_EQ(error_key("phy.mcs_efficiency = 0.5,1,1.5\n"), "phy.mcs_efficiency");
    EXPECT_EQ(error_key("sim.k_min = 50\nsim.k_max = 10\n"), "sim.k_max");
}

TEST(Parse, MalformedLine)
{
    EXPECT_THROW(parse_config("just words\n"), ConfigError);
}

TEST(Settings, EchoRoundTrips)
{
    Settings s;
    s.merge_text("lo.v = 750\nsim.users = 33\ntraffic.load_mbps = 1.25\ncapacity.schedulers = lo, rr\n"
                 "phy.mcs_rate_mbps = 6,12,18,24,36,48,54,60\n");
    Settings again;
    again.merge_text(s.to_text());
    EXPECT_EQ(again, s);
    EXPECT_EQ(again.to_text(), s.to_text());
    EXPECT_EQ(again.resolve(), s.resolve());
    EXPECT_EQ(s.resolve().capacity.schedulers,
              (std::vector<sched::SchedulerKind>{sched::SchedulerKind::lo, sched::SchedulerKind::rr}));
}

TEST(Settings, EchoIsCanonical)
{
    Settings a;
    Settings b;
    a.set("lo.v", "1000");
    b.set("lo.v", "1e3");
    EXPECT_EQ(a.to_text(), b.to_text());
}

TEST(Report, OneRecordPerSessionUser)
{
    sim::ScenarioConfig cfg;
    cfg.snr_case = 2;
    cfg.users = 7;
    cfg.sessions = 3;
    cfg.duration_s = 1.0;
    const auto ledgers = sim::run_sessions(cfg, 1);
    const auto records = report::records_csv(ledgers);
    EXPECT_EQ(count_lines(records), 1 + 3 * 7u);
    EXPECT_EQ(records.substr(0, records.find('\n')),
              "session,user,content,snr_db,arrived,delivered,late,lost,cache_served,residual,peak_cache,mean_delay_ms");
    EXPECT_EQ(count_lines(report::run_summary_csv(cfg, ledgers)), 2u);
    EXPECT_EQ(report::records_csv(sim::run_sessions(cfg, 3)), records);
}

TEST(Report, CapacitySummaryHasOneRowPerCombination)
{
    std::vector<report::CapacityRow> rows;
    for (auto kind : {sched::SchedulerKind::lo, sched::SchedulerKind::mlwdf, sched::SchedulerKind::rr}) {
        for (bool mc : {true, false}) {
            for (double load : {0.5, 1.0}) {
                rows.push_back({kind, mc, load, sim::CapacityResult{10, 3, {}}});
            }
        }
    }
    const auto csv = report::capacity_summary_csv(rows);
    EXPECT_EQ(count_lines(csv), 1 + 12u);
    EXPECT_NE(csv.find("lo,on,0.500,10,3\n"), std::string::npos);
}
