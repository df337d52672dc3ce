#include "pvhil/plant.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include <spdlog/spdlog.h>

namespace pvhil::plant {

namespace {

using Complex = std::complex<double>;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

control::SimTime sim_time(std::uint64_t tick, const PlantConfig& cfg) {
    return control::SimTime(static_cast<std::int64_t>(tick) * cfg.dt_ns());
}

// Highest voltage the MPPT may command: array Voc at the coldest, brightest clamp.
double mppt_voltage_bound(const pv::PVModuleParams& params) {
    return pv::array_open_circuit_voltage(
        pv::EnvInput{pv::kInsolationMax, pv::kTemperatureMin, {}}, params);
}

}  // namespace

void validate_load(const LoadCommand& cmd, const LoadLimits& limits) {
    if (!(cmd.p_setpoint >= limits.p_min && cmd.p_setpoint <= limits.p_max)) {
        std::ostringstream os;
        os << "p_setpoint " << cmd.p_setpoint << " W outside the legal range [" << limits.p_min
           << ", " << limits.p_max << "] W";
        throw std::out_of_range(os.str());
    }
    if (!(cmd.power_factor > 0.0 && cmd.power_factor <= 1.0)) {
        throw std::out_of_range("power_factor must lie in (0, 1]");
    }
}

Impedance load_command_to_impedance(const LoadCommand& cmd, double ac_vrms_nominal) {
    const double s = cmd.p_setpoint / cmd.power_factor;
    const double z = ac_vrms_nominal * ac_vrms_nominal / s;
    return {z * cmd.power_factor, z * std::sin(std::acos(cmd.power_factor))};
}

void SimConfig::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (telemetry_decimation < 1) throw std::invalid_argument("telemetry_decimation must be >= 1");
    if (!(c_dc > 0.0)) throw std::invalid_argument("c_dc must be positive");
    if (!(v_dc_ref > 0.0)) throw std::invalid_argument("v_dc_ref must be positive");
    if (!(converter_efficiency > 0.0 && converter_efficiency <= 1.0)) {
        throw std::invalid_argument("converter_efficiency must lie in (0, 1]");
    }
    if (!(ac_vrms_nominal > 0.0)) throw std::invalid_argument("ac_vrms_nominal must be positive");
    if (mppt_period < 1) throw std::invalid_argument("mppt_period must be >= 1");
    if (!(mppt_step > 0.0)) throw std::invalid_argument("mppt_step must be positive");
    if (!(dc_link_time_constant > 0.0)) throw std::invalid_argument("dc_link_time_constant must be positive");
    if (!(v_dc_max > v_dc_ref)) throw std::invalid_argument("v_dc_max must exceed v_dc_ref");
    if (!(v_dc_initial >= 0.0 && v_dc_initial <= v_dc_max)) {
        throw std::invalid_argument("v_dc_initial must lie in [0, v_dc_max]");
    }
}

double PlantConfig::trip_threshold() const {
    if (protection.trip_threshold) return *protection.trip_threshold;
    return 2.0 * limits.p_max / sim.ac_vrms_nominal;
}

std::int64_t PlantConfig::dt_ns() const {
    return static_cast<std::int64_t>(std::llround(sim.dt * 1e9));
}

PlantState initial_state(const PlantConfig& cfg) {
    cfg.sim.validate();
    validate_load(cfg.initial_load, cfg.limits);

    PlantState s;
    s.v_dc = cfg.sim.v_dc_initial;
    s.env = pv::EnvInput::clamped(cfg.sim.initial_insolation, cfg.sim.initial_temperature);
    s.load = cfg.initial_load;
    const auto z = load_command_to_impedance(s.load, cfg.sim.ac_vrms_nominal);
    s.load_r = z.r;
    s.load_x = z.x;

    s.breaker.trip_threshold = cfg.trip_threshold();
    s.breaker.trip_delay = std::chrono::duration_cast<control::SimTime>(
        std::chrono::duration<double>(cfg.protection.trip_delay));
    s.fault.fault_impedance = cfg.protection.fault_impedance;
    if (cfg.protection.fault_auto_clear) {
        s.fault.auto_clear_after = std::chrono::duration_cast<control::SimTime>(
            std::chrono::duration<double>(*cfg.protection.fault_auto_clear));
    }

    s.mppt.step_size = cfg.sim.mppt_step;
    s.mppt.v_max = mppt_voltage_bound(cfg.pv);
    s.mppt.v_ref = 0.8 * cfg.pv.voc_stc * cfg.pv.n_series_modules;
    return s;
}

PlantState step(const PlantState& prev, const PlantConfig& cfg) {
    const auto& sim = cfg.sim;
    const auto& params = cfg.pv;
    const auto now = sim_time(prev.tick, cfg);

    PlantState s = prev;
    s.flags = {};
    s.fault = control::fault_expire(prev.fault, now);

    // MPPT tracks the uncurtailed power at its own reference.
    if (prev.tick % static_cast<std::uint64_t>(sim.mppt_period) == 0) {
        s.mppt = control::pno_step(prev.mppt, prev.pv_p_available);
    }

    bool substituted = false;
    auto array_current = [&](double v) {
        bool sub = false;
        const double i = pv::array_current_at_voltage(v, s.env, params, &sub);
        substituted = substituted || sub;
        return i;
    };

    const double voc = pv::array_open_circuit_voltage(s.env, params);
    const double v_mppt = std::clamp(s.mppt.v_ref, 0.0, voc);
    const double i_mppt = array_current(v_mppt);
    s.pv_p_available = v_mppt * i_mppt;

    // Load impedance with the fault paralleled in at the PCC.
    const auto z_load = load_command_to_impedance(s.load, sim.ac_vrms_nominal);
    s.load_r = z_load.r;
    s.load_x = z_load.x;
    const Complex y_load = 1.0 / Complex(z_load.r, z_load.x);
    const Complex y_total =
        s.fault.active ? y_load + 1.0 / Complex(s.fault.fault_impedance, 0.0) : y_load;

    const bool closed = s.breaker.position == control::BreakerPosition::Closed;
    const double v_nom = sim.ac_vrms_nominal;
    const double p_ac_demand = closed ? v_nom * v_nom * y_total.real() : 0.0;
    const double p_drain_demand = p_ac_demand / sim.converter_efficiency;

    const double e_cap = 0.5 * sim.c_dc * prev.v_dc * prev.v_dc;
    auto open_circuit = [&] {
        s.curtailed = true;
        s.pv_v = voc;
        s.pv_i = 0.0;
    };
    auto at_mppt = [&] {
        s.curtailed = false;
        s.pv_v = v_mppt;
        s.pv_i = i_mppt;
    };

    if (closed) {
        // DC-link regulation: draw what the converter needs plus an energy correction
        // toward v_dc_ref; surplus PV power is curtailed on the current-source side.
        const double e_ref = 0.5 * sim.c_dc * sim.v_dc_ref * sim.v_dc_ref;
        const double p_target = p_drain_demand + (e_ref - e_cap) / sim.dc_link_time_constant;
        if (s.pv_p_available <= p_target) {
            at_mppt();
        } else if (p_target <= 0.0) {
            open_circuit();
        } else {
            s.curtailed = true;
            double lo = 0.0;
            double hi = v_mppt;
            for (int it = 0; it < 64 && hi - lo > 1e-10; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mid * array_current(mid) < p_target) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            s.pv_v = 0.5 * (lo + hi);
            s.pv_i = array_current(s.pv_v);
        }
    } else {
        // Converter idle: the array charges the link until the overvoltage ceiling.
        const double e_max = 0.5 * sim.c_dc * sim.v_dc_max * sim.v_dc_max;
        if (e_cap + sim.dt * s.pv_p_available <= e_max) {
            at_mppt();
        } else {
            open_circuit();
        }
    }
    s.pv_p = s.pv_v * s.pv_i;

    // The link can give at most its stored energy plus this step's PV input.
    const double budget = e_cap / sim.dt + s.pv_p;
    const double p_drain = std::clamp(p_drain_demand, 0.0, std::max(budget, 0.0));
    const double ac_scale = p_drain_demand > 0.0 ? p_drain / p_drain_demand : 1.0;
    s.ac_vrms = closed ? v_nom * std::sqrt(ac_scale) : 0.0;
    s.p_dc_drain = p_drain;
    s.p_ac_total = closed ? s.ac_vrms * s.ac_vrms * y_total.real() : 0.0;
    s.load_i_rms = closed ? s.ac_vrms * std::abs(y_total) : 0.0;
    s.load_p = closed ? s.ac_vrms * s.ac_vrms * y_load.real() : 0.0;

    const double e_next = std::max(0.0, e_cap + sim.dt * (s.pv_p - p_drain));
    s.v_dc = std::sqrt(2.0 * e_next / sim.c_dc);

    s.breaker = control::breaker_update(s.breaker, s.load_i_rms, now);
    if (s.breaker.position != control::BreakerPosition::Closed) {
        s.ac_vrms = 0.0;
        s.load_i_rms = 0.0;
        s.load_p = 0.0;
        s.p_ac_total = 0.0;
    }

    s.flags.undervoltage = s.v_dc < 0.1 * sim.v_dc_ref;
    s.flags.solver_substituted = substituted;
    s.tick = prev.tick + 1;
    s.t_sim = static_cast<double>(sim_time(s.tick, cfg).count()) * 1e-9;
    return s;
}

std::string describe(const Command& cmd) {
    return std::visit(Overloaded{
                          [](const SetLoad& l) {
                              std::ostringstream os;
                              os << "set_load " << l.load.p_setpoint << " W pf " << l.load.power_factor;
                              return os.str();
                          },
                          [](control::BreakerCommand b) { return "breaker " + std::string(to_string(b)); },
                          [](control::FaultCommand f) { return "fault " + std::string(to_string(f)); },
                      },
                      cmd);
}

void apply_command(PlantState& state, const Command& cmd, const PlantConfig& cfg) {
    const auto now = sim_time(state.tick, cfg);
    std::visit(Overloaded{
                   [&](const SetLoad& l) {
                       validate_load(l.load, cfg.limits);
                       state.load = l.load;
                       const auto z = load_command_to_impedance(l.load, cfg.sim.ac_vrms_nominal);
                       state.load_r = z.r;
                       state.load_x = z.x;
                   },
                   [&](control::BreakerCommand b) {
                       state.breaker = control::breaker_command(state.breaker, b, state.fault.active);
                   },
                   [&](control::FaultCommand f) { state.fault = control::fault_apply(state.fault, f, now); },
               },
               cmd);
}

void apply_env(PlantState& state, const EnvUpdate& update) {
    if (update.insolation) state.env.insolation = pv::clamp_insolation(*update.insolation);
    if (update.temperature) state.env.temperature = pv::clamp_temperature(*update.temperature);
    state.env.received_at = update.received_at;
}

Plant::Plant(PlantConfig cfg) : cfg_(std::move(cfg)), state_(initial_state(cfg_)) {}

void Plant::post_env(EnvUpdate update) {
    std::lock_guard lock(queue_mutex_);
    env_queue_.push_back(update);
}

void Plant::post_command(Command cmd) {
    std::lock_guard lock(queue_mutex_);
    command_queue_.push_back(std::move(cmd));
}

const PlantState& Plant::tick() {
    {
        std::lock_guard lock(queue_mutex_);
        env_scratch_.swap(env_queue_);
        command_scratch_.swap(command_queue_);
    }
    for (const auto& u : env_scratch_) apply_env(state_, u);
    for (const auto& c : command_scratch_) {
        try {
            apply_command(state_, c, cfg_);
        } catch (const std::exception& e) {
            ++rejected_;
            spdlog::warn("rejected command '{}': {}", describe(c), e.what());
        }
    }
    env_scratch_.clear();
    command_scratch_.clear();
    state_ = step(state_, cfg_);
    return state_;
}

}  // namespace pvhil::plant
