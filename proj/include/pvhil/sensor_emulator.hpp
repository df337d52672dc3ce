#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "pvhil/skt_codec.hpp"

namespace pvhil::skt {

/// Stand-in for a sensor node: connects to the gateway, optionally declares a
/// role line, and sends one frame per interval on absolute deadlines.
struct SensorEmulatorOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 4575;
    /// Role line sent first. Empty: no role line.
    std::optional<std::string> role;
    SktVariableSchema schema = SktVariableSchema::default_schema();
    ByteOrder byte_order = ByteOrder::Big;
    std::chrono::nanoseconds interval = std::chrono::milliseconds(100);
    /// Stop after this many frames; empty runs until stopped.
    std::optional<std::uint64_t> frames;
    /// Frame values at elapsed time t (seconds), in schema order.
    std::function<std::vector<double>(double t)> profile = [](double) {
        return std::vector<double>{1000.0, 25.0};
    };
    int max_retries = 20;
    std::chrono::milliseconds retry_backoff{100};
};

struct SensorEmulatorResult {
    std::uint64_t frames_sent = 0;
    int connects = 0;
    double elapsed = 0.0;  // s
};

/// Blocking; returns when the frame budget is spent, stop is requested, or
/// reconnect retries are exhausted (throws std::runtime_error in that case).
SensorEmulatorResult run_sensor_emulator(const SensorEmulatorOptions& opts, std::stop_token stop = {});

}  // namespace pvhil::skt
