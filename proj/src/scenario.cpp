#include "pvhil/scenario.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include <spdlog/spdlog.h>

namespace pvhil::runtime {

namespace {

struct EventName {
    std::string_view name;
    EventKind kind;
    int min_args;
    int max_args;
};

constexpr EventName kEventNames[] = {
    {"set_insolation", EventKind::SetInsolation, 1, 1},
    {"set_temperature", EventKind::SetTemperature, 1, 1},
    {"set_load", EventKind::SetLoad, 1, 2},
    {"breaker_open", EventKind::BreakerOpen, 0, 0},
    {"breaker_close", EventKind::BreakerClose, 0, 0},
    {"breaker_reset", EventKind::BreakerReset, 0, 0},
    {"fault_inject", EventKind::FaultInject, 0, 0},
    {"fault_clear", EventKind::FaultClear, 0, 0},
};

double parse_number(const std::string& tok, int line) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
        throw ScriptParseError(line, "expected a number, got '" + tok + "'");
    }
    return v;
}

struct Accumulator {
    std::uint64_t n = 0;
    double pv_i = 0, pv_v = 0, pv_p = 0, v_dc = 0, load_p = 0, g = 0, t = 0;

    void add(const plant::PlantState& s) {
        ++n;
        pv_i += s.pv_i;
        pv_v += s.pv_v;
        pv_p += s.pv_p;
        v_dc += s.v_dc;
        load_p += s.load_p;
        g += s.env.insolation;
        t += s.env.temperature;
    }
};

void post_event(plant::Plant& plant, const ScenarioEvent& ev) {
    using control::BreakerCommand;
    using control::FaultCommand;
    switch (ev.kind) {
        case EventKind::SetInsolation: plant.post_env({ev.value, std::nullopt, {}}); break;
        case EventKind::SetTemperature: plant.post_env({std::nullopt, ev.value, {}}); break;
        case EventKind::SetLoad: {
            plant::LoadCommand cmd{ev.value, ev.power_factor.value_or(plant.state().load.power_factor)};
            plant.post_command(plant::SetLoad{cmd});
            break;
        }
        case EventKind::BreakerOpen: plant.post_command(BreakerCommand::Open); break;
        case EventKind::BreakerClose: plant.post_command(BreakerCommand::Close); break;
        case EventKind::BreakerReset: plant.post_command(BreakerCommand::Reset); break;
        case EventKind::FaultInject: plant.post_command(FaultCommand::Inject); break;
        case EventKind::FaultClear: plant.post_command(FaultCommand::Clear); break;
    }
}

double unix_seconds() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace

std::string_view to_string(EventKind k) {
    for (const auto& e : kEventNames) {
        if (e.kind == k) return e.name;
    }
    return "?";
}

ScenarioScript parse_scenario(std::string_view text, std::string name) {
    ScenarioScript script;
    script.name = std::move(name);
    std::optional<double> duration;
    int duration_line = 0;

    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;

        if (tok[0] == "duration") {
            if (tok.size() != 2) throw ScriptParseError(line, "usage: duration <seconds>");
            if (duration) throw ScriptParseError(line, "duration given twice");
            duration = parse_number(tok[1], line);
            if (!(*duration > 0.0)) throw ScriptParseError(line, "duration must be positive");
            duration_line = line;
        } else if (tok[0] == "name") {
            if (tok.size() != 2) throw ScriptParseError(line, "usage: name <identifier>");
            script.name = tok[1];
        } else if (tok[0] == "at") {
            if (tok.size() < 3) throw ScriptParseError(line, "usage: at <seconds> <event> [args]");
            ScenarioEvent ev;
            ev.line = line;
            ev.at = parse_number(tok[1], line);
            if (ev.at < 0.0) throw ScriptParseError(line, "event time must be >= 0");
            const auto* def = std::find_if(std::begin(kEventNames), std::end(kEventNames),
                                           [&](const EventName& e) { return e.name == tok[2]; });
            if (def == std::end(kEventNames)) throw ScriptParseError(line, "unknown event '" + tok[2] + "'");
            const int nargs = static_cast<int>(tok.size()) - 3;
            if (nargs < def->min_args || nargs > def->max_args) {
                throw ScriptParseError(line, "wrong number of arguments for " + tok[2]);
            }
            ev.kind = def->kind;
            if (nargs >= 1) ev.value = parse_number(tok[3], line);
            if (nargs == 2) ev.power_factor = parse_number(tok[4], line);
            if (!script.events.empty() && ev.at < script.events.back().at) {
                throw ScriptParseError(line, "event times must be non-decreasing");
            }
            script.events.push_back(ev);
        } else {
            throw ScriptParseError(line, "unknown directive '" + tok[0] + "'");
        }
    }
    if (!duration) throw ScriptParseError(line == 0 ? 1 : line, "missing 'duration' directive");
    script.duration = *duration;
    for (const auto& ev : script.events) {
        if (ev.at > script.duration) {
            throw ScriptParseError(ev.line, "event at " + std::to_string(ev.at) +
                                                " s is after the duration set on line " +
                                                std::to_string(duration_line));
        }
    }
    return script;
}

ScenarioScript load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path.stem().string());
}

nlohmann::ordered_json to_json(const ScenarioSummary& s) {
    nlohmann::ordered_json segs = nlohmann::ordered_json::array();
    for (const auto& g : s.segments) {
        segs.push_back({{"t_start", g.t_start},
                        {"t_end", g.t_end},
                        {"steps", g.steps},
                        {"mean_pv_i", g.mean_pv_i},
                        {"mean_pv_v", g.mean_pv_v},
                        {"mean_pv_p", g.mean_pv_p},
                        {"mean_v_dc", g.mean_v_dc},
                        {"mean_load_p", g.mean_load_p},
                        {"mean_insolation", g.mean_insolation},
                        {"mean_temperature", g.mean_temperature}});
    }
    nlohmann::ordered_json j{
        {"name", s.name},
        {"mode", s.mode == plant::Pacing::Offline ? "offline" : "realtime"},
        {"steps", s.steps},
        {"telemetry_records", s.telemetry_records},
        {"rejected_commands", s.rejected_commands},
        {"solver_substitutions", s.solver_substitutions},
        {"undervoltage_steps", s.undervoltage_steps},
        {"telemetry_failed", s.telemetry_failed},
        {"segments", segs},
    };
    if (s.pacing) {
        j["pacing"] = {{"ticks", s.pacing->ticks},
                       {"overruns", s.pacing->overruns},
                       {"late_releases", s.pacing->late_releases},
                       {"mean_period", s.pacing->mean_period},
                       {"max_lateness", s.pacing->max_lateness},
                       {"final_lateness", s.pacing->final_lateness},
                       {"degraded", s.pacing->degraded}};
    }
    return j;
}

ScenarioSummary run_scenario(const ScenarioScript& script, plant::Plant& plant, const RunOptions& opts) {
    const auto& cfg = plant.config();
    const double dt = cfg.sim.dt;
    const auto total_steps = static_cast<std::uint64_t>(std::llround(script.duration / dt));
    const auto decimation = static_cast<std::uint64_t>(cfg.sim.telemetry_decimation);
    const bool offline = opts.mode == plant::Pacing::Offline;

    std::vector<double> bounds{0.0};
    for (const auto& ev : script.events) {
        if (ev.at > 0.0 && ev.at < script.duration && ev.at != bounds.back()) bounds.push_back(ev.at);
    }
    bounds.push_back(script.duration);
    std::vector<Accumulator> acc(bounds.size() - 1);

    std::unique_ptr<telemetry::TelemetryWriter> writer;
    std::unique_ptr<telemetry::BackgroundTelemetryWriter> bg_writer;
    if (opts.out) {
        if (offline) {
            writer = std::make_unique<telemetry::TelemetryWriter>(*opts.out, opts.format);
        } else {
            bg_writer = std::make_unique<telemetry::BackgroundTelemetryWriter>(*opts.out, opts.format);
        }
    }

    ScenarioSummary summary;
    summary.name = script.name;
    summary.mode = opts.mode;
    const auto rejected_before = plant.rejected_commands();

    std::size_t next_event = 0;
    std::size_t segment = 0;

    auto do_tick = [&](std::uint64_t k, bool degraded) {
        const double t = static_cast<double>(k) * dt;
        while (next_event < script.events.size() &&
               static_cast<std::uint64_t>(std::llround(script.events[next_event].at / dt)) <= k) {
            post_event(plant, script.events[next_event++]);
        }
        const auto& s = plant.tick();
        ++summary.steps;
        if (s.flags.solver_substituted) ++summary.solver_substitutions;
        if (s.flags.undervoltage) ++summary.undervoltage_steps;

        while (segment + 1 < acc.size() && t >= bounds[segment + 1]) ++segment;
        if (t >= 0.5 * (bounds[segment] + bounds[segment + 1])) acc[segment].add(s);
        if (opts.on_step) opts.on_step(s);

        const bool emit = s.tick % decimation == 0;
        if (!emit && (offline || opts.hub == nullptr)) return;
        const auto counters = opts.counters ? opts.counters() : telemetry::Counters{};
        const auto sample = telemetry::make_sample(s, counters, offline ? s.t_sim : unix_seconds(), degraded);
        if (!emit) {
            opts.hub->update_latest(sample);
            return;
        }
        if (opts.hub != nullptr) opts.hub->publish(sample);
        if (writer) {
            writer->write(sample);
            ++summary.telemetry_records;
        }
        if (bg_writer) {
            bg_writer->enqueue(sample);
            ++summary.telemetry_records;
        }
    };

    if (offline) {
        for (std::uint64_t k = 0; k < total_steps; ++k) {
            if (opts.stop.stop_requested()) break;
            do_tick(k, false);
        }
        if (writer) writer->flush();
    } else {
        summary.pacing = run_paced(std::chrono::nanoseconds(cfg.dt_ns()), opts.stop, do_tick, total_steps);
        if (bg_writer) {
            bg_writer->close();
            summary.telemetry_failed = bg_writer->failed();
            if (summary.telemetry_failed) spdlog::error("telemetry file writes failed during the run");
        }
    }

    for (std::size_t i = 0; i < acc.size(); ++i) {
        SegmentSummary g;
        g.t_start = bounds[i];
        g.t_end = bounds[i + 1];
        const auto& a = acc[i];
        g.steps = a.n;
        if (a.n > 0) {
            const double n = static_cast<double>(a.n);
            g.mean_pv_i = a.pv_i / n;
            g.mean_pv_v = a.pv_v / n;
            g.mean_pv_p = a.pv_p / n;
            g.mean_v_dc = a.v_dc / n;
            g.mean_load_p = a.load_p / n;
            g.mean_insolation = a.g / n;
            g.mean_temperature = a.t / n;
        }
        summary.segments.push_back(g);
    }
    summary.rejected_commands = plant.rejected_commands() - rejected_before;
    return summary;
}

ScenarioSummary run_scenario(const ScenarioScript& script, const plant::PlantConfig& cfg,
                             const RunOptions& opts) {
    plant::Plant plant(cfg);
    return run_scenario(script, plant, opts);
}

}  // namespace pvhil::runtime
