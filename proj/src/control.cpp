#include "pvhil/control.hpp"

#include <algorithm>
#include <string>

namespace pvhil::control {

MpptState pno_step(const MpptState& state, double measured_power) {
    if (!state.enabled) return state;
    MpptState next = state;
    if (measured_power < state.last_power) next.last_direction = -state.last_direction;
    next.v_ref = std::clamp(state.v_ref + next.last_direction * state.step_size, 0.0,
                            std::max(state.v_max, 0.0));
    next.last_power = measured_power;
    return next;
}

std::string_view to_string(BreakerPosition p) {
    switch (p) {
        case BreakerPosition::Closed: return "CLOSED";
        case BreakerPosition::Open: return "OPEN";
        case BreakerPosition::Tripped: return "TRIPPED";
    }
    return "?";
}

std::string_view to_string(BreakerCommand c) {
    switch (c) {
        case BreakerCommand::Open: return "open";
        case BreakerCommand::Close: return "close";
        case BreakerCommand::Reset: return "reset";
    }
    return "?";
}

std::string_view to_string(FaultCommand c) {
    return c == FaultCommand::Inject ? "inject" : "clear";
}

BreakerPosition parse_breaker_position(std::string_view s) {
    if (s == "CLOSED") return BreakerPosition::Closed;
    if (s == "OPEN") return BreakerPosition::Open;
    if (s == "TRIPPED") return BreakerPosition::Tripped;
    throw std::invalid_argument("unknown breaker position: " + std::string(s));
}

BreakerCommand parse_breaker_command(std::string_view s) {
    if (s == "open") return BreakerCommand::Open;
    if (s == "close") return BreakerCommand::Close;
    if (s == "reset") return BreakerCommand::Reset;
    throw std::invalid_argument("unknown breaker command: " + std::string(s));
}

FaultCommand parse_fault_command(std::string_view s) {
    if (s == "inject") return FaultCommand::Inject;
    if (s == "clear") return FaultCommand::Clear;
    throw std::invalid_argument("unknown fault command: " + std::string(s));
}

BreakerState breaker_update(const BreakerState& state, double measured_current, SimTime now) {
    if (state.position != BreakerPosition::Closed) {
        BreakerState next = state;
        next.overcurrent_since.reset();
        return next;
    }
    BreakerState next = state;
    if (measured_current > state.trip_threshold) {
        if (!next.overcurrent_since) next.overcurrent_since = now;
        if (now - *next.overcurrent_since >= state.trip_delay) {
            next.position = BreakerPosition::Tripped;
            next.overcurrent_since.reset();
        }
    } else {
        next.overcurrent_since.reset();
    }
    return next;
}

BreakerState breaker_command(const BreakerState& state, BreakerCommand cmd, bool fault_active) {
    BreakerState next = state;
    switch (cmd) {
        case BreakerCommand::Open:
            if (state.position == BreakerPosition::Closed) next.position = BreakerPosition::Open;
            break;
        case BreakerCommand::Close:
            if (state.position == BreakerPosition::Tripped) {
                throw IllegalTransition("breaker is TRIPPED; reset before closing");
            }
            if (fault_active) throw IllegalTransition("close refused while a fault is active");
            next.position = BreakerPosition::Closed;
            break;
        case BreakerCommand::Reset:
            if (state.position == BreakerPosition::Tripped) next.position = BreakerPosition::Open;
            break;
    }
    if (next.position != state.position) next.overcurrent_since.reset();
    return next;
}

FaultState fault_apply(const FaultState& state, FaultCommand command, SimTime now) {
    FaultState next = state;
    if (command == FaultCommand::Inject) {
        if (!state.active) {
            next.active = true;
            next.started_at = now;
        }
    } else {
        next.active = false;
    }
    return next;
}

FaultState fault_expire(const FaultState& state, SimTime now) {
    if (state.active && state.auto_clear_after && now - state.started_at >= *state.auto_clear_after) {
        return fault_apply(state, FaultCommand::Clear, now);
    }
    return state;
}

}  // namespace pvhil::control
