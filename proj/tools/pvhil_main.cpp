#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pvhil/config.hpp"
#include "pvhil/pv_model.hpp"
#include "pvhil/scenario.hpp"
#include "pvhil/sensor_emulator.hpp"
#include "pvhil/service.hpp"

namespace {

using namespace pvhil;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

/// Turns SIGINT/SIGTERM into a stop request.
class InterruptWatcher {
public:
    InterruptWatcher() {
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        thread_ = std::jthread([this](std::stop_token self) {
            while (!self.stop_requested()) {
                if (g_interrupted) {
                    source_.request_stop();
                    return;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
        });
    }
    std::stop_token token() const { return source_.get_token(); }

private:
    std::stop_source source_;
    std::jthread thread_;
};

runtime::AppConfig load(const std::string& path) {
    if (path.empty()) {
        auto cfg = runtime::default_config();
        runtime::apply_port_overrides(cfg);
        return cfg;
    }
    return runtime::load_config(path);
}

telemetry::Format pick_format(const std::string& flag, const std::string& out, telemetry::Format fallback) {
    if (!flag.empty()) return telemetry::parse_format(flag);
    if (out.size() >= 4 && out.compare(out.size() - 4, 4, ".csv") == 0) return telemetry::Format::Csv;
    if (out.size() >= 6 && out.compare(out.size() - 6, 6, ".jsonl") == 0) return telemetry::Format::Jsonl;
    return fallback;
}

std::pair<double, double> parse_grid_point(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw CLI::ValidationError("--grid", "expected G,T but got '" + s + "'");
    try {
        return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
    } catch (const std::exception&) {
        throw CLI::ValidationError("--grid", "expected numbers in '" + s + "'");
    }
}

int cmd_run(const std::string& config_path, const std::string& scenario_path, const std::string& mode_flag,
            const std::string& out, const std::string& format_flag) {
    auto cfg = load(config_path);
    const auto script = runtime::load_scenario(scenario_path);
    const auto mode = mode_flag.empty() ? cfg.plant.sim.pacing
                                        : (mode_flag == "offline" ? plant::Pacing::Offline : plant::Pacing::Realtime);
    cfg.plant.sim.pacing = mode;
    const auto format = pick_format(format_flag, out, cfg.telemetry.format);
    std::optional<std::filesystem::path> out_path;
    if (!out.empty()) out_path = out;

    InterruptWatcher interrupt;
    runtime::Service service(cfg, mode);
    if (mode == plant::Pacing::Realtime) {
        service.start_network();
        spdlog::info("REALTIME run '{}' ({} s); SKT port {}, API port {}", script.name, script.duration,
                     service.skt_port(), service.api_port());
    }
    const auto summary = service.run(script, out_path, format, interrupt.token());
    service.stop_network();
    std::cout << runtime::to_json(summary).dump(2) << "\n";
    return summary.telemetry_failed ? 1 : 0;
}

int cmd_serve(const std::string& config_path, const std::string& out, const std::string& format_flag) {
    const auto cfg = load(config_path);
    const auto format = pick_format(format_flag, out, cfg.telemetry.format);
    std::optional<std::filesystem::path> out_path;
    if (!out.empty()) out_path = out;

    InterruptWatcher interrupt;
    runtime::Service service(cfg, plant::Pacing::Realtime);
    service.start_network();
    spdlog::info("serving: SKT port {}, API port {}; Ctrl-C to stop", service.skt_port(), service.api_port());
    const auto summary = service.serve(out_path, format, interrupt.token());
    service.stop_network();
    spdlog::info("stopped after {} steps", summary.steps);
    return summary.telemetry_failed ? 1 : 0;
}

int cmd_curves(const std::string& config_path, const std::vector<std::string>& grid, int points,
               const std::string& out) {
    const auto cfg = load(config_path);
    std::vector<std::pair<double, double>> gt;
    for (const auto& arg : grid) {
        std::stringstream ss(arg);
        for (std::string item; std::getline(ss, item, ';');) {
            if (!item.empty()) gt.push_back(parse_grid_point(item));
        }
    }
    if (gt.empty()) gt = {{1000.0, 25.0}};

    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw std::runtime_error("cannot open " + out);
    }
    std::ostream& os = out.empty() ? std::cout : file;
    os << "insolation,temperature,voltage,current,power\n";
    for (const auto& [g, t] : gt) {
        const auto env = pv::EnvInput::clamped(g, t);
        const auto curve = pv::iv_curve(env, cfg.plant.pv, points);
        for (const auto& p : curve.points) {
            os << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", env.insolation, env.temperature, p.voltage, p.current,
                              p.voltage * p.current);
        }
    }
    return 0;
}

int cmd_sensor(const std::string& host, std::uint16_t port, const std::string& role, double rate,
               std::uint64_t frames, double insolation, double temperature, const std::string& config_path) {
    const auto cfg = load(config_path);
    skt::SensorEmulatorOptions opts;
    opts.host = host;
    opts.port = port == 0 ? cfg.skt.port : port;
    if (!role.empty()) opts.role = role;
    opts.schema = cfg.skt.schema;
    opts.byte_order = cfg.skt.byte_order;
    opts.interval = std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / rate));
    if (frames > 0) opts.frames = frames;
    const auto& schema = cfg.skt.schema;
    opts.profile = [&schema, insolation, temperature](double) {
        std::vector<double> v(schema.size(), 0.0);
        for (std::size_t i = 0; i < schema.size(); ++i) {
            if (schema[i].target == skt::VarTarget::Insolation) v[i] = insolation;
            if (schema[i].target == skt::VarTarget::Temperature) v[i] = temperature;
        }
        return v;
    };
    InterruptWatcher interrupt;
    const auto r = skt::run_sensor_emulator(opts, interrupt.token());
    spdlog::info("sent {} frames in {:.2f} s over {} connection(s)", r.frames_sent, r.elapsed, r.connects);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("pvhil"));

    CLI::App app{"PV hardware-in-the-loop twin"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

    std::string config_path, scenario_path, mode, out, format;
    auto* run = app.add_subcommand("run", "Replay a scenario script");
    run->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    run->add_option("--scenario", scenario_path, "Scenario script")->required()->check(CLI::ExistingFile);
    run->add_option("--mode", mode, "offline or realtime (default: config sim.pacing)")
        ->check(CLI::IsMember({"offline", "realtime"}));
    run->add_option("--out", out, "Telemetry output file");
    run->add_option("--format", format, "jsonl or csv (default: from --out extension)")
        ->check(CLI::IsMember({"jsonl", "csv"}));

    auto* serve = app.add_subcommand("serve", "Run the paced plant with the SKT gateway and operator API");
    serve->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    serve->add_option("--telemetry-out", out, "Telemetry output file");
    serve->add_option("--format", format, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));

    std::vector<std::string> grid;
    int points = 101;
    auto* curves = app.add_subcommand("curves", "Emit I-V and P-V curves as CSV");
    curves->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    curves->add_option("--grid", grid, "G,T pairs; repeat the flag or separate with ';'");
    curves->add_option("--points", points, "Points per curve")->check(CLI::Range(2, 100000));
    curves->add_option("--out", out, "CSV file (default: stdout)");

    std::string host = "127.0.0.1", role;
    std::uint16_t port = 0;
    double rate = 10.0, insolation = 1000.0, temperature = 25.0;
    std::uint64_t frames = 0;
    auto* sensor = app.add_subcommand("sensor", "Emulate a sensor node sending SKT frames");
    sensor->add_option("--config", config_path, "JSON configuration file (schema, byte order, port)")
        ->check(CLI::ExistingFile);
    sensor->add_option("--host", host, "Gateway host");
    sensor->add_option("--port", port, "Gateway port (default: from config)");
    sensor->add_option("--role", role, "INSOLATION, TEMPERATURE or ALL")
        ->check(CLI::IsMember({"INSOLATION", "TEMPERATURE", "ALL"}, CLI::ignore_case));
    sensor->add_option("--rate", rate, "Frames per second")->check(CLI::PositiveNumber);
    sensor->add_option("--frames", frames, "Stop after this many frames (0: until Ctrl-C)");
    sensor->add_option("--insolation", insolation, "W/m^2");
    sensor->add_option("--temperature", temperature, "degC");

    auto* config = app.add_subcommand("config", "Print the effective configuration");
    config->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*run) return cmd_run(config_path, scenario_path, mode, out, format);
        if (*serve) return cmd_serve(config_path, out, format);
        if (*curves) return cmd_curves(config_path, grid, points, out);
        if (*sensor) {
            for (auto& ch : role) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            return cmd_sensor(host, port, role, rate, frames, insolation, temperature, config_path);
        }
        if (*config) {
            std::cout << runtime::config_to_json(load(config_path)).dump(2) << "\n";
            return 0;
        }
    } catch (const runtime::ScriptParseError& e) {
        spdlog::error("scenario {}: {}", scenario_path, e.what());
        return 2;
    } catch (const runtime::ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
