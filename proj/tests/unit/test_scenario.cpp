#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pvhil/scenario.hpp"

using namespace pvhil;
using namespace pvhil::runtime;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("pvhil_scn_" + std::to_string(::getpid()) + "_" + name);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

plant::PlantConfig offline_config() {
    plant::PlantConfig cfg;
    cfg.sim.pacing = plant::Pacing::Offline;
    return cfg;
}

}  // namespace

TEST(Parse, FullGrammar) {
    const auto s = parse_scenario(R"(# demo
name demo
duration 10
at 0 set_insolation 500
at 0.5 set_temperature 30   # trailing comment
at 1 set_load 20 0.9
at 2 breaker_open
at 3 breaker_close
at 4 fault_inject
at 5 fault_clear
at 6 breaker_reset
)");
    EXPECT_EQ(s.name, "demo");
    EXPECT_DOUBLE_EQ(s.duration, 10.0);
    ASSERT_EQ(s.events.size(), 8u);
    EXPECT_EQ(s.events[2].kind, EventKind::SetLoad);
    EXPECT_DOUBLE_EQ(s.events[2].value, 20.0);
    EXPECT_DOUBLE_EQ(*s.events[2].power_factor, 0.9);
    EXPECT_EQ(s.events[7].kind, EventKind::BreakerReset);
    EXPECT_EQ(s.events[1].line, 5);
}

TEST(Parse, ErrorsCarryLineNumbers) {
    struct Case {
        const char* text;
        int line;
    };
    for (const auto& c : {Case{"duration 5\nat 1 set_insolation\n", 2},
                          Case{"duration 5\n\nat x set_insolation 3\n", 3},
                          Case{"duration 5\nat 1 explode\n", 2},
                          Case{"duration 5\nat 2 fault_inject\nat 1 fault_clear\n", 3},
                          Case{"duration 5\nat 6 fault_inject\n", 2},
                          Case{"bogus\n", 1},
                          Case{"duration -1\n", 1},
                          Case{"duration 1\nduration 2\n", 2},
                          Case{"at 0 fault_inject\n", 1}}) {
        try {
            (void)parse_scenario(c.text);
            ADD_FAILURE() << "accepted: " << c.text;
        } catch (const ScriptParseError& e) {
            EXPECT_EQ(e.line(), c.line) << c.text << " -> " << e.what();
            EXPECT_NE(std::string(e.what()).find("line " + std::to_string(c.line)), std::string::npos);
        }
    }
}

TEST(Parse, BundledScenariosLoad) {
    for (const char* name : {"insolation_step", "temperature_step", "load_sweep", "fault_trip"}) {
        const auto s = load_scenario(std::filesystem::path(PVHIL_SCENARIO_DIR) / (std::string(name) + ".txt"));
        EXPECT_EQ(s.name, name);
        EXPECT_GT(s.duration, 0.0);
    }
}

TEST(Run, EmptyOneSecondScript) {
    const auto path = temp_file("empty.jsonl");
    RunOptions opts;
    opts.out = path;
    const auto summary = run_scenario(parse_scenario("duration 1\n"), offline_config(), opts);
    EXPECT_EQ(summary.steps, 1000u);
    EXPECT_EQ(summary.telemetry_records, 20u);
    std::ifstream in(path);
    int lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    EXPECT_EQ(lines, 20);
    std::filesystem::remove(path);
}

TEST(Run, OfflineOutputIsByteIdentical) {
    const auto script = load_scenario(std::filesystem::path(PVHIL_SCENARIO_DIR) / "fault_trip.txt");
    for (auto fmt : {telemetry::Format::Jsonl, telemetry::Format::Csv}) {
        const auto a = temp_file("det_a"), b = temp_file("det_b");
        RunOptions opts;
        opts.format = fmt;
        opts.out = a;
        (void)run_scenario(script, offline_config(), opts);
        opts.out = b;
        (void)run_scenario(script, offline_config(), opts);
        const auto sa = slurp(a);
        EXPECT_FALSE(sa.empty());
        EXPECT_EQ(sa, slurp(b));
        std::filesystem::remove(a);
        std::filesystem::remove(b);
    }
}

TEST(Run, InsolationStepSegments) {
    const auto script = load_scenario(std::filesystem::path(PVHIL_SCENARIO_DIR) / "insolation_step.txt");
    const auto s = run_scenario(script, offline_config(), {});
    ASSERT_EQ(s.segments.size(), 2u);
    EXPECT_DOUBLE_EQ(s.segments[0].mean_insolation, 500.0);
    EXPECT_DOUBLE_EQ(s.segments[1].mean_insolation, 1000.0);
    EXPECT_GT(s.segments[1].mean_pv_i, s.segments[0].mean_pv_i);
}

TEST(Run, TemperatureStepChangesLessThanInsolationStep) {
    const auto dir = std::filesystem::path(PVHIL_SCENARIO_DIR);
    const auto g = run_scenario(load_scenario(dir / "insolation_step.txt"), offline_config(), {});
    const auto t = run_scenario(load_scenario(dir / "temperature_step.txt"), offline_config(), {});
    const double rel_i = g.segments[1].mean_pv_i / g.segments[0].mean_pv_i - 1.0;
    const double rel_p = t.segments[1].mean_pv_p / t.segments[0].mean_pv_p - 1.0;
    EXPECT_LT(std::abs(rel_p), std::abs(rel_i));
}

TEST(Run, FaultTripScenarioTripsAndRecloses) {
    const auto script = load_scenario(std::filesystem::path(PVHIL_SCENARIO_DIR) / "fault_trip.txt");
    bool tripped = false;
    control::BreakerPosition last{};
    RunOptions opts;
    opts.on_step = [&](const plant::PlantState& s) {
        tripped = tripped || s.breaker.position == control::BreakerPosition::Tripped;
        last = s.breaker.position;
    };
    const auto summary = run_scenario(script, offline_config(), opts);
    EXPECT_TRUE(tripped);
    EXPECT_EQ(last, control::BreakerPosition::Closed);
    EXPECT_EQ(summary.rejected_commands, 0u);
}

TEST(Run, LoadSweepTracksSetpoints) {
    const auto script = load_scenario(std::filesystem::path(PVHIL_SCENARIO_DIR) / "load_sweep.txt");
    const auto s = run_scenario(script, offline_config(), {});
    ASSERT_EQ(s.segments.size(), 6u);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(s.segments[k].mean_load_p, 5.0 * (k + 1), 1e-6);
}

TEST(Run, StopTokenEndsOfflineRun) {
    std::stop_source src;
    RunOptions opts;
    opts.stop = src.get_token();
    opts.on_step = [&](const plant::PlantState& s) {
        if (s.tick == 100) src.request_stop();
    };
    const auto s = run_scenario(parse_scenario("duration 10\n"), offline_config(), opts);
    EXPECT_EQ(s.steps, 100u);
}

TEST(Run, SummaryJson) {
    const auto s = run_scenario(parse_scenario("name x\nduration 0.1\n"), offline_config(), {});
    const auto j = to_json(s);
    EXPECT_EQ(j["name"], "x");
    EXPECT_EQ(j["mode"], "offline");
    EXPECT_EQ(j["steps"], 100);
    EXPECT_FALSE(j.contains("pacing"));
}
