#include "pvhil/pacing.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace pvhil::runtime {

PacingStats run_paced(std::chrono::nanoseconds dt, std::stop_token stop, const TickFn& tick,
                      std::optional<std::uint64_t> max_ticks) {
    using Clock = std::chrono::steady_clock;
    using Seconds = std::chrono::duration<double>;

    PacingStats stats;
    const auto window = static_cast<std::size_t>(
        std::max<std::int64_t>(1, std::chrono::seconds(1) / dt));
    std::vector<bool> late_ring(window, false);
    std::size_t late_in_window = 0;
    const auto late_margin = dt / 2;

    const auto t0 = Clock::now() + dt;
    Clock::time_point first_release{};
    Clock::time_point last_release{};

    for (std::uint64_t k = 0; !max_ticks || k < *max_ticks; ++k) {
        if (stop.stop_requested()) break;
        const auto deadline = t0 + static_cast<std::int64_t>(k) * dt;
        std::this_thread::sleep_until(deadline);
        const auto released = Clock::now();
        if (k == 0) first_release = released;
        last_release = released;

        const auto lateness = released - deadline;
        stats.max_lateness = std::max(stats.max_lateness, Seconds(lateness).count());
        const bool late = lateness > late_margin;
        if (late) ++stats.late_releases;
        const std::size_t slot = k % window;
        if (late_ring[slot]) --late_in_window;
        late_ring[slot] = late;
        if (late) ++late_in_window;
        if (k + 1 >= window && late_in_window * 2 > window) stats.degraded = true;

        tick(k, stats.degraded);
        ++stats.ticks;

        if (Clock::now() > deadline + dt) ++stats.overruns;
    }

    if (stats.ticks > 1) {
        stats.mean_period = Seconds(last_release - first_release).count() /
                            static_cast<double>(stats.ticks - 1);
        stats.final_lateness = Seconds(last_release - (t0 + static_cast<std::int64_t>(stats.ticks - 1) * dt)).count();
    }
    return stats;
}

}  // namespace pvhil::runtime
