#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <stop_token>

namespace pvhil::runtime {

struct PacingStats {
    std::uint64_t ticks = 0;
    std::uint64_t overruns = 0;        // tick work finished after the next deadline
    std::uint64_t late_releases = 0;   // released more than half a period after the deadline
    double mean_period = 0.0;          // s, between first and last release
    double max_lateness = 0.0;         // s, release minus deadline
    double final_lateness = 0.0;       // s, of the last release; bounded when there is no drift
    bool degraded = false;             // some 1 s window had more than half its ticks late
};

/// Called once per tick with the tick index and the current degraded flag.
using TickFn = std::function<void(std::uint64_t tick, bool degraded)>;

/// Releases ticks on absolute monotonic deadlines t0 + k*dt, so lateness never
/// accumulates. Returns when max_ticks have run or stop is requested (checked
/// every tick).
PacingStats run_paced(std::chrono::nanoseconds dt, std::stop_token stop, const TickFn& tick,
                      std::optional<std::uint64_t> max_ticks = std::nullopt);

}  // namespace pvhil::runtime
