#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvhil/pacing.hpp"
#include "pvhil/plant.hpp"
#include "pvhil/telemetry.hpp"

namespace pvhil::runtime {

enum class EventKind {
    SetInsolation,
    SetTemperature,
    SetLoad,
    BreakerOpen,
    BreakerClose,
    BreakerReset,
    FaultInject,
    FaultClear,
};

std::string_view to_string(EventKind k);

struct ScenarioEvent {
    double at = 0.0;  // s
    EventKind kind = EventKind::SetInsolation;
    double value = 0.0;                   // W/m^2, degC, or W depending on kind
    std::optional<double> power_factor;   // set_load only
    int line = 0;
};

/// Timed events replayed against the plant. Text form, one directive per line:
///
///     # comment
///     duration 10
///     at 0 set_insolation 500
///     at 5 set_load 30 0.95
///     at 6 breaker_open
struct ScenarioScript {
    std::string name;
    double duration = 0.0;
    std::vector<ScenarioEvent> events;
};

class ScriptParseError : public std::runtime_error {
public:
    ScriptParseError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

ScenarioScript parse_scenario(std::string_view text, std::string name = {});
ScenarioScript load_scenario(const std::filesystem::path& path);

/// Steady-state means over the second half of a segment. Segments are split at
/// every distinct event time inside (0, duration).
struct SegmentSummary {
    double t_start = 0.0;
    double t_end = 0.0;
    std::uint64_t steps = 0;
    double mean_pv_i = 0.0;
    double mean_pv_v = 0.0;
    double mean_pv_p = 0.0;
    double mean_v_dc = 0.0;
    double mean_load_p = 0.0;
    double mean_insolation = 0.0;
    double mean_temperature = 0.0;
};

struct ScenarioSummary {
    std::string name;
    plant::Pacing mode = plant::Pacing::Offline;
    std::uint64_t steps = 0;
    std::uint64_t telemetry_records = 0;
    std::uint64_t rejected_commands = 0;
    std::uint64_t solver_substitutions = 0;
    std::uint64_t undervoltage_steps = 0;
    bool telemetry_failed = false;
    std::vector<SegmentSummary> segments;
    std::optional<PacingStats> pacing;
};

nlohmann::ordered_json to_json(const ScenarioSummary& s);

struct RunOptions {
    plant::Pacing mode = plant::Pacing::Offline;
    std::optional<std::filesystem::path> out;
    telemetry::Format format = telemetry::Format::Jsonl;
    telemetry::TelemetryHub* hub = nullptr;
    std::function<telemetry::Counters()> counters;
    std::stop_token stop;
    /// Per-step observer, called after every step (OFFLINE and REALTIME).
    std::function<void(const plant::PlantState&)> on_step;
};

/// OFFLINE: events are injected straight into the plant queues and the run is
/// as fast as possible; telemetry write errors are fatal.
/// REALTIME: ticks are paced on the monotonic clock; env normally comes from the
/// gateway feeding `plant`; telemetry write errors only set telemetry_failed.
ScenarioSummary run_scenario(const ScenarioScript& script, plant::Plant& plant, const RunOptions& opts);
ScenarioSummary run_scenario(const ScenarioScript& script, const plant::PlantConfig& cfg,
                             const RunOptions& opts);

}  // namespace pvhil::runtime
