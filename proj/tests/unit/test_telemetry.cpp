#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "pvhil/plant.hpp"
#include "pvhil/telemetry.hpp"

using namespace pvhil;
using namespace pvhil::telemetry;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("pvhil_test_" + std::to_string(::getpid()) + "_" + name);
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

TelemetrySample sample(int k) {
    plant::PlantConfig cfg;
    auto s = plant::initial_state(cfg);
    for (int i = 0; i <= k % 7; ++i) s = plant::step(s, cfg);
    return make_sample(s, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(2 * k)}, 1.7e9 + k, k % 3 == 0);
}

}  // namespace

TEST(Sample, MirrorsPlantState) {
    plant::PlantConfig cfg;
    auto s = plant::step(plant::initial_state(cfg), cfg);
    const auto t = make_sample(s, {3, 4}, 12.5, true);
    EXPECT_DOUBLE_EQ(t.t_sim, s.t_sim);
    EXPECT_DOUBLE_EQ(t.wall_clock, 12.5);
    EXPECT_DOUBLE_EQ(t.pv_i, s.pv_i);
    EXPECT_DOUBLE_EQ(t.load_p_setpoint, s.load.p_setpoint);
    EXPECT_DOUBLE_EQ(t.load_p_actual, s.load_p);
    EXPECT_EQ(t.counters, (Counters{3, 4}));
    EXPECT_TRUE(t.flags.degraded_realtime);
}

TEST(Json, RoundTripAndKeyOrder) {
    const auto s = sample(5);
    const auto j = to_json(s);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    const std::vector<std::string> expected{"t_sim",           "wall_clock",    "v_dc",    "pv_v",
                                            "pv_i",            "pv_p",          "insolation", "temperature",
                                            "load_p_setpoint", "load_p_actual", "ac_vrms", "breaker_position",
                                            "fault_active",    "counters",      "flags"};
    EXPECT_EQ(keys, expected);
    EXPECT_EQ(j["breaker_position"], "CLOSED");
    EXPECT_EQ(sample_from_json(nlohmann::json::parse(j.dump())), s);
}

TEST(Csv, HeaderFollowsFieldOrder) {
    EXPECT_EQ(csv_header(),
              "t_sim,wall_clock,v_dc,pv_v,pv_i,pv_p,insolation,temperature,load_p_setpoint,load_p_actual,"
              "ac_vrms,breaker_position,fault_active,insolation_count,temperature_count,undervoltage,"
              "degraded_realtime,solver_substituted");
    const auto row = to_csv_row(sample(3));
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), static_cast<long>(csv_columns().size() - 1));
}

TEST(Writer, JsonlHundredSamplesHundredLines) {
    const auto path = temp_file("hundred.jsonl");
    {
        TelemetryWriter w(path, Format::Jsonl);
        for (int k = 0; k < 100; ++k) w.write(sample(k));
        EXPECT_EQ(w.records(), 100u);
    }
    const auto lines = read_lines(path);
    ASSERT_EQ(lines.size(), 100u);
    for (int k = 0; k < 100; ++k) {
        const auto j = nlohmann::json::parse(lines[static_cast<std::size_t>(k)]);
        EXPECT_EQ(sample_from_json(j), sample(k));
    }
    std::filesystem::remove(path);
}

TEST(Writer, CsvHeaderThenRows) {
    const auto path = temp_file("rows.csv");
    {
        TelemetryWriter w(path, Format::Csv);
        for (int k = 0; k < 10; ++k) w.write(sample(k));
    }
    const auto lines = read_lines(path);
    ASSERT_EQ(lines.size(), 11u);
    EXPECT_EQ(lines[0], csv_header());
    EXPECT_EQ(lines[1], to_csv_row(sample(0)));
    std::filesystem::remove(path);
}

TEST(Writer, ReadableMidRunAfterFlush) {
    const auto path = temp_file("mid.jsonl");
    TelemetryWriter w(path, Format::Jsonl);
    w.write(sample(1));
    w.flush();
    EXPECT_EQ(read_lines(path).size(), 1u);
    std::filesystem::remove(path);
}

TEST(Writer, UnwritablePathFails) {
    EXPECT_THROW(TelemetryWriter("/nonexistent-dir/x.jsonl", Format::Jsonl), TelemetryWriteError);
}

TEST(BackgroundWriter, DrainsOnClose) {
    const auto path = temp_file("bg.jsonl");
    BackgroundTelemetryWriter w(path, Format::Jsonl);
    for (int k = 0; k < 500; ++k) w.enqueue(sample(k));
    w.close();
    EXPECT_FALSE(w.failed());
    EXPECT_EQ(w.records(), 500u);
    EXPECT_EQ(read_lines(path).size(), 500u);
    std::filesystem::remove(path);
}

TEST(Format, Names) {
    EXPECT_EQ(parse_format("csv"), Format::Csv);
    EXPECT_EQ(parse_format("jsonl"), Format::Jsonl);
    EXPECT_EQ(to_string(Format::Csv), "csv");
    EXPECT_THROW((void)parse_format("xml"), std::invalid_argument);
}

TEST(Hub, LatestAndSubscribers) {
    TelemetryHub hub;
    EXPECT_EQ(hub.latest(), nullptr);
    std::atomic<int> got{0};
    const auto id = hub.subscribe([&](const auto&) { ++got; });
    hub.update_latest(sample(1));
    EXPECT_EQ(got, 0);
    ASSERT_NE(hub.latest(), nullptr);
    EXPECT_EQ(hub.latest_published(), nullptr);
    hub.publish(sample(2));
    EXPECT_EQ(got, 1);
    EXPECT_EQ(*hub.latest(), sample(2));
    EXPECT_EQ(*hub.latest_published(), sample(2));
    hub.unsubscribe(id);
    hub.publish(sample(3));
    EXPECT_EQ(got, 1);
    EXPECT_EQ(hub.subscriber_count(), 0u);
}
