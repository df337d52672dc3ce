#include "pvhil/sensor_emulator.hpp"

#include <stdexcept>
#include <thread>

#include <boost/asio.hpp>
#include <spdlog/spdlog.h>

namespace pvhil::skt {

namespace asio = boost::asio;
using asio::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

bool sleep_until_or_stop(Clock::time_point deadline, const std::stop_token& stop) {
    // Short slices keep stop latency low without busy-waiting.
    constexpr auto kSlice = std::chrono::milliseconds(20);
    while (!stop.stop_requested()) {
        const auto now = Clock::now();
        if (now >= deadline) return true;
        std::this_thread::sleep_until(std::min(deadline, now + kSlice));
    }
    return false;
}

}  // namespace

SensorEmulatorResult run_sensor_emulator(const SensorEmulatorOptions& opts, std::stop_token stop) {
    SensorEmulatorResult result;
    asio::io_context io;
    tcp::resolver resolver(io);
    const auto endpoints = resolver.resolve(opts.host, std::to_string(opts.port));

    const auto t0 = Clock::now();
    int failures = 0;
    while (!stop.stop_requested() && (!opts.frames || result.frames_sent < *opts.frames)) {
        tcp::socket socket(io);
        boost::system::error_code ec;
        asio::connect(socket, endpoints, ec);
        if (ec) {
            if (++failures > opts.max_retries) {
                throw std::runtime_error("cannot reach gateway at " + opts.host + ":" + std::to_string(opts.port) +
                                         ": " + ec.message());
            }
            if (!sleep_until_or_stop(Clock::now() + opts.retry_backoff, stop)) break;
            continue;
        }
        failures = 0;
        ++result.connects;
        socket.set_option(tcp::no_delay(true));
        if (opts.role) {
            const std::string line = "ROLE " + *opts.role + "\n";
            asio::write(socket, asio::buffer(line), ec);
        }

        auto deadline = Clock::now();
        while (!ec && !stop.stop_requested() && (!opts.frames || result.frames_sent < *opts.frames)) {
            const double t = std::chrono::duration<double>(Clock::now() - t0).count();
            const auto values = opts.profile(t);
            const auto frame = encode_packet(values, opts.schema, opts.byte_order);
            asio::write(socket, asio::buffer(frame), ec);
            if (ec) break;
            ++result.frames_sent;
            deadline += opts.interval;
            if (!sleep_until_or_stop(deadline, stop)) break;
        }
        if (ec) spdlog::warn("sensor emulator lost the connection: {}; reconnecting", ec.message());
        boost::system::error_code ignored;
        socket.shutdown(tcp::socket::shutdown_both, ignored);
        socket.close(ignored);
    }
    result.elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    return result;
}

}  // namespace pvhil::skt
