#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pvhil/control.hpp"
#include "pvhil/pv_model.hpp"

namespace pvhil::plant {

enum class Pacing { Realtime, Offline };

struct LoadCommand {
    double p_setpoint = 15.0;   // W
    double power_factor = 0.95;
};

/// Operator slider range.
struct LoadLimits {
    double p_min = 5.0;
    double p_max = 30.0;
};

/// Throws std::out_of_range citing the legal range.
void validate_load(const LoadCommand& cmd, const LoadLimits& limits);

struct Impedance {
    double r = 0.0;  // ohms
    double x = 0.0;  // ohms, inductive
};

/// Series R/L impedance that draws p_setpoint at the given RMS voltage.
Impedance load_command_to_impedance(const LoadCommand& cmd, double ac_vrms_nominal);

struct SimConfig {
    double dt = 0.001;                  // s
    double c_dc = 2e-3;                 // F
    double v_dc_ref = 48.0;             // V
    double v_dc_initial = 48.0;         // V
    double v_dc_max = 72.0;             // V, link stops charging here while the converter is idle
    double converter_efficiency = 0.95;
    double ac_vrms_nominal = 120.0;     // V, transformer ratio folded in
    int telemetry_decimation = 50;      // 20 Hz at dt = 1 ms
    Pacing pacing = Pacing::Realtime;
    int mppt_period = 10;               // steps between P&O updates
    double mppt_step = 0.5;             // V
    double dc_link_time_constant = 0.2; // s, DC-link energy regulator
    double initial_insolation = 1000.0;
    double initial_temperature = 25.0;

    void validate() const;
};

struct ProtectionConfig {
    std::optional<double> trip_threshold;  // A; default 2x rated load current
    double trip_delay = 0.05;              // s
    double fault_impedance = 1.0;          // ohms
    std::optional<double> fault_auto_clear; // s
};

struct PlantConfig {
    pv::PVModuleParams pv = pv::default_module();
    SimConfig sim;
    ProtectionConfig protection;
    LoadLimits limits;
    LoadCommand initial_load;

    /// Explicit threshold, or twice the current of the largest slider load at nominal voltage.
    double trip_threshold() const;
    std::int64_t dt_ns() const;
};

struct PlantFlags {
    bool undervoltage = false;
    bool solver_substituted = false;
};

struct PlantState {
    std::uint64_t tick = 0;
    double t_sim = 0.0;            // s, tick * dt
    double v_dc = 0.0;
    double pv_v = 0.0;
    double pv_i = 0.0;
    double pv_p = 0.0;
    double pv_p_available = 0.0;   // power at the MPPT reference, before curtailment
    bool curtailed = false;
    pv::EnvInput env;
    LoadCommand load;
    double load_r = 0.0;
    double load_x = 0.0;
    control::BreakerState breaker;
    control::FaultState fault;
    control::MpptState mppt;
    double ac_vrms = 0.0;          // PCC voltage (0 when the breaker is not closed)
    double load_i_rms = 0.0;       // PCC current seen by the breaker, load plus fault
    double load_p = 0.0;           // power absorbed by the R/L load
    double p_ac_total = 0.0;       // converter AC output, load plus fault
    double p_dc_drain = 0.0;       // converter DC input drawn from the link this step
    PlantFlags flags;
};

PlantState initial_state(const PlantConfig& cfg);

/// Advances one dt. Pure: identical inputs give bit-identical outputs.
PlantState step(const PlantState& state, const PlantConfig& cfg);

// ---------------------------------------------------------------------------
// Inputs arriving from outside the stepper.

/// A sensor update; each present field replaces the held value.
struct EnvUpdate {
    std::optional<double> insolation;
    std::optional<double> temperature;
    std::chrono::steady_clock::time_point received_at{};
};

struct SetLoad {
    LoadCommand load;
};

using Command = std::variant<SetLoad, control::BreakerCommand, control::FaultCommand>;

std::string describe(const Command& cmd);

/// Applies an operator command to a state. Throws std::out_of_range for a load
/// outside the slider range and control::IllegalTransition for refused breaker moves.
void apply_command(PlantState& state, const Command& cmd, const PlantConfig& cfg);
void apply_env(PlantState& state, const EnvUpdate& update);

/// Single-owner stepper with two ordered input queues (sensor data, commands)
/// drained at the start of every tick. post_* may be called from any thread;
/// tick() and state() belong to the stepping thread.
class Plant {
public:
    explicit Plant(PlantConfig cfg);

    void post_env(EnvUpdate update);
    void post_command(Command cmd);

    const PlantState& tick();
    const PlantState& state() const noexcept { return state_; }
    const PlantConfig& config() const noexcept { return cfg_; }

    std::uint64_t rejected_commands() const noexcept { return rejected_; }

private:
    PlantConfig cfg_;
    PlantState state_;

    std::mutex queue_mutex_;
    std::vector<EnvUpdate> env_queue_;
    std::vector<Command> command_queue_;
    std::vector<EnvUpdate> env_scratch_;
    std::vector<Command> command_scratch_;
    std::uint64_t rejected_ = 0;
};

}  // namespace pvhil::plant
