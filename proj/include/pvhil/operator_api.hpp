#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pvhil/plant.hpp"
#include "pvhil/pv_model.hpp"
#include "pvhil/telemetry.hpp"

namespace pvhil::runtime {

inline constexpr int kApiSchemaVersion = 1;

/// What the operator API may touch. Reads go through the hub snapshot, writes
/// through post_command; the API never sees PlantState.
struct PlantHandle {
    telemetry::TelemetryHub* hub = nullptr;
    std::function<void(plant::Command)> post_command;
    std::function<nlohmann::json()> counters;   // GET /counters body, without "v"
    plant::Pacing mode = plant::Pacing::Realtime;
    plant::LoadLimits limits;
    pv::PVModuleParams pv = pv::default_module();
    int ivcurve_points = 101;
};

struct ApiResponse {
    int status = 200;
    nlohmann::ordered_json body;
};

/// Transport-independent request handling; OperatorApi wraps it in HTTP.
/// Every body carries "v": 1.
class ApiHandler {
public:
    explicit ApiHandler(PlantHandle plant);

    ApiResponse handle(const std::string& method, const std::string& target, const std::string& body);

    /// GET /ivcurve body; recomputed at most five times per second.
    nlohmann::ordered_json ivcurve();

    /// WebSocket frame for one sample.
    static std::string stream_message(const telemetry::TelemetrySample& s);

    const PlantHandle& plant() const noexcept { return plant_; }

private:
    ApiResponse post_load(const nlohmann::json& body);
    ApiResponse post_breaker(const nlohmann::json& body);
    ApiResponse post_fault(const nlohmann::json& body);
    std::optional<ApiResponse> reject_offline() const;

    PlantHandle plant_;
    std::mutex curve_mutex_;
    std::chrono::steady_clock::time_point curve_at_{};
    std::optional<pv::EnvInput> curve_env_;
    nlohmann::ordered_json curve_cache_;
};

/// HTTP + WebSocket server on a private I/O thread.
///   GET  /state      latest TelemetrySample
///   GET  /ivcurve    array I-V and P-V curve at the latest env, with the operating point
///   GET  /counters   SKT communication counters
///   POST /load       {"p_setpoint": W, "power_factor"?: pf}
///   POST /breaker    {"action": "open"|"close"|"reset"}
///   POST /fault      {"action": "inject"|"clear"}
///   WS   /stream     one TelemetrySample per decimated tick
class OperatorApi {
public:
    OperatorApi(std::string bind, std::uint16_t port, PlantHandle plant);
    ~OperatorApi();
    OperatorApi(const OperatorApi&) = delete;
    OperatorApi& operator=(const OperatorApi&) = delete;

    /// Throws std::system_error on bind failure.
    void start();
    void stop();
    std::uint16_t port() const noexcept;

    class Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace pvhil::runtime
