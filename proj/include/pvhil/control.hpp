#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string_view>

namespace pvhil::control {

/// Simulation timestamps are integer nanoseconds since the start of a run.
using SimTime = std::chrono::nanoseconds;

// ---------------------------------------------------------------------------
// Perturb-and-observe MPPT

struct MpptState {
    double v_ref = 0.0;       // commanded array operating voltage (V)
    double last_power = 0.0;  // W
    int last_direction = +1;  // +1 or -1
    double step_size = 0.5;   // V
    bool enabled = true;
    double v_max = 0.0;       // upper clamp for v_ref, usually the array Voc bound
};

/// One P&O update: keep direction while power does not drop, otherwise reverse.
/// A disabled controller is returned unchanged.
MpptState pno_step(const MpptState& state, double measured_power);

// ---------------------------------------------------------------------------
// Breaker

enum class BreakerPosition { Closed, Open, Tripped };
enum class BreakerCommand { Open, Close, Reset };

std::string_view to_string(BreakerPosition p);
std::string_view to_string(BreakerCommand c);
BreakerPosition parse_breaker_position(std::string_view s);
BreakerCommand parse_breaker_command(std::string_view s);

struct BreakerState {
    BreakerPosition position = BreakerPosition::Closed;
    double trip_threshold = 0.5;  // A
    SimTime trip_delay = std::chrono::milliseconds(50);
    std::optional<SimTime> overcurrent_since;
};

class IllegalTransition : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Overcurrent protection: a CLOSED breaker carrying more than trip_threshold
/// for at least trip_delay becomes TRIPPED. Any other position is left alone.
BreakerState breaker_update(const BreakerState& state, double measured_current, SimTime now);

/// Operator command. Throws IllegalTransition (state untouched) for close while
/// TRIPPED, or close while a fault is active.
/// Open on TRIPPED keeps TRIPPED; reset on TRIPPED yields OPEN; reset otherwise is a no-op.
BreakerState breaker_command(const BreakerState& state, BreakerCommand cmd, bool fault_active);

// ---------------------------------------------------------------------------
// Fault injector

enum class FaultCommand { Inject, Clear };

std::string_view to_string(FaultCommand c);
FaultCommand parse_fault_command(std::string_view s);

struct FaultState {
    bool active = false;
    double fault_impedance = 1.0;  // ohms, placed in parallel with the load at the PCC
    SimTime started_at{0};
    std::optional<SimTime> auto_clear_after;
};

/// Idempotent inject/clear.
FaultState fault_apply(const FaultState& state, FaultCommand command, SimTime now);

/// Clears an active fault whose auto_clear_after window has elapsed.
FaultState fault_expire(const FaultState& state, SimTime now);

}  // namespace pvhil::control
