#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pvhil/config.hpp"
#include "pvhil/plant.hpp"
#include "pvhil/skt_codec.hpp"

namespace pvhil::skt {

struct ClientStats {
    std::string address;
    std::optional<VarTarget> role;  // empty: frame maps every target
    std::uint64_t packets = 0;
    double rate = 0.0;  // packets/s over the last 10 s
};

/// Communication counters. Per-variable counts are atomics readable from any
/// thread; per-client rates sit behind a mutex.
class IngestCounters {
public:
    static constexpr std::chrono::seconds kRateWindow{10};

    explicit IngestCounters(const SktVariableSchema& schema);

    std::uint64_t variable_count(std::size_t index) const noexcept;
    std::uint64_t target_count(VarTarget target) const noexcept;
    std::uint64_t packets() const noexcept { return packets_.load(); }
    std::uint64_t dropped_nan() const noexcept { return dropped_nan_.load(); }
    std::uint64_t malformed() const noexcept { return malformed_.load(); }
    const SktVariableSchema& schema() const noexcept { return schema_; }

    std::vector<ClientStats> clients(std::chrono::steady_clock::time_point now =
                                         std::chrono::steady_clock::now()) const;

    // Writers, called by the gateway.
    void client_connected(const std::string& address, std::chrono::steady_clock::time_point at);
    void client_role(const std::string& address, std::optional<VarTarget> role);
    void client_disconnected(const std::string& address);
    void record_packet(const std::string& address, const std::vector<bool>& applied,
                       std::chrono::steady_clock::time_point at);
    void record_dropped_nan() noexcept { ++dropped_nan_; }
    void record_malformed() noexcept { ++malformed_; }

private:
    struct Client {
        std::chrono::steady_clock::time_point connected_at;
        std::optional<VarTarget> role;
        std::uint64_t packets = 0;
        std::deque<std::chrono::steady_clock::time_point> recent;
    };

    SktVariableSchema schema_;
    std::unique_ptr<std::atomic<std::uint64_t>[]> per_variable_;
    std::atomic<std::uint64_t> packets_{0};
    std::atomic<std::uint64_t> dropped_nan_{0};
    std::atomic<std::uint64_t> malformed_{0};
    mutable std::mutex clients_mutex_;
    std::map<std::string, Client> clients_;
};

using EnvSink = std::function<void(const plant::EnvUpdate&)>;

/// GTNET-SKT compatible TCP listener. One acceptor and one reader per
/// connection on a private I/O thread; every decoded frame becomes one
/// EnvUpdate handed to the sink, so both values of a frame land together.
///
/// A connection may open with a text line "ROLE INSOLATION\n" (or TEMPERATURE,
/// ALL); frames on it then update only that target.
class SktGateway {
public:
    SktGateway(runtime::SktSettings settings, EnvSink sink);
    ~SktGateway();
    SktGateway(const SktGateway&) = delete;
    SktGateway& operator=(const SktGateway&) = delete;

    /// Binds and starts the I/O thread. Throws std::system_error on bind failure.
    void start();
    void stop();

    /// Bound port (useful with port 0).
    std::uint16_t port() const noexcept;
    const IngestCounters& counters() const noexcept;
    std::size_t connected_clients() const noexcept;

    class Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace pvhil::skt
