#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "pvhil/plant.hpp"
#include "pvhil/pv_model.hpp"
#include "pvhil/skt_codec.hpp"
#include "pvhil/telemetry.hpp"

namespace pvhil::runtime {

struct SktSettings {
    std::string bind = "0.0.0.0";
    std::uint16_t port = 4575;
    skt::ByteOrder byte_order = skt::ByteOrder::Big;
    bool echo = false;                // reply with INT32 counters after each packet
    bool accept_role_header = true;   // optional "ROLE <target>\n" line at connect
    skt::SktVariableSchema schema = skt::SktVariableSchema::default_schema();
};

struct ApiSettings {
    std::string bind = "0.0.0.0";
    std::uint16_t port = 8080;
    int ivcurve_points = 101;
};

struct TelemetrySettings {
    telemetry::Format format = telemetry::Format::Jsonl;
};

/// Everything a process needs. `datasheet` is what the file declares; `plant.pv`
/// holds the fitted parameters derived from it.
struct AppConfig {
    pv::PVModuleParams datasheet;
    plant::PlantConfig plant;
    SktSettings skt;
    ApiSettings api;
    TelemetrySettings telemetry;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing keys take defaults; unknown keys are rejected. Fits the PV datasheet.
AppConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const AppConfig& cfg);

/// Reads a JSON config file. With apply_env, PVHIL_SKT_PORT and PVHIL_API_PORT
/// override the ports.
AppConfig load_config(const std::filesystem::path& path, bool apply_env = true);
AppConfig default_config();

/// Applies PVHIL_SKT_PORT / PVHIL_API_PORT if set.
void apply_port_overrides(AppConfig& cfg);

}  // namespace pvhil::runtime
