#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stop_token>

#include <nlohmann/json.hpp>

#include "pvhil/config.hpp"
#include "pvhil/operator_api.hpp"
#include "pvhil/plant.hpp"
#include "pvhil/scenario.hpp"
#include "pvhil/skt_gateway.hpp"
#include "pvhil/telemetry.hpp"

namespace pvhil::runtime {

/// GET /counters body for a gateway's counters.
nlohmann::json counters_json(const skt::IngestCounters& counters);
telemetry::Counters sample_counters(const skt::IngestCounters& counters);

/// One plant wired to its network front ends. In REALTIME mode the SKT gateway
/// feeds the plant; in OFFLINE mode only scripted events do, and the operator
/// API rejects commands.
class Service {
public:
    explicit Service(AppConfig cfg, plant::Pacing mode = plant::Pacing::Realtime);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the gateway (REALTIME only) and the operator API.
    void start_network();
    void stop_network();

    /// Runs a script against the plant in this service's mode. Blocks.
    ScenarioSummary run(const ScenarioScript& script, std::optional<std::filesystem::path> out,
                        telemetry::Format format, std::stop_token stop = {});

    /// Runs until stop is requested, with no scripted events.
    ScenarioSummary serve(std::optional<std::filesystem::path> out, telemetry::Format format,
                          std::stop_token stop);

    std::uint16_t skt_port() const noexcept;
    std::uint16_t api_port() const noexcept;
    plant::Plant& plant() noexcept { return *plant_; }
    telemetry::TelemetryHub& hub() noexcept { return hub_; }
    const skt::IngestCounters* counters() const noexcept;
    const AppConfig& config() const noexcept { return cfg_; }

private:
    AppConfig cfg_;
    plant::Pacing mode_;
    std::unique_ptr<plant::Plant> plant_;
    telemetry::TelemetryHub hub_;
    std::unique_ptr<skt::SktGateway> gateway_;
    std::unique_ptr<OperatorApi> api_;
};

}  // namespace pvhil::runtime
