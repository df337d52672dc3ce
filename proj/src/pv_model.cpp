#include "pvhil/pv_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace pvhil::pv {

namespace {

double to_kelvin(double celsius) { return celsius + kKelvinOffset; }

struct Bracketed {
    double x = 0.0;
    double fx = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Newton iteration kept inside a sign-change bracket [lo, hi]; any step that
// leaves the bracket (or a flat derivative) falls back to bisection.
template <typename Fn>
Bracketed safeguarded_newton(Fn&& fn, double lo, double hi, double guess, int max_iterations,
                             double ftol) {
    auto [flo, dflo] = fn(lo);
    (void)dflo;
    if (flo == 0.0) return {lo, 0.0, 0, true};
    const bool positive_at_lo = flo > 0.0;

    double x = std::clamp(guess, lo, hi);
    double fx = 0.0;
    for (int it = 1; it <= max_iterations; ++it) {
        auto [f, df] = fn(x);
        fx = f;
        if (std::abs(fx) <= ftol) return {x, fx, it, true};
        if ((fx > 0.0) == positive_at_lo) {
            lo = x;
        } else {
            hi = x;
        }
        double next = x - fx / df;
        if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
        if (next == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                                         std::max(1.0, std::abs(x))) {
            auto [fn_next, dfn] = fn(next);
            (void)dfn;
            return {next, fn_next, it, std::abs(fn_next) <= 1e-9};
        }
        x = next;
    }
    const double mid = 0.5 * (lo + hi);
    auto [fmid, dfmid] = fn(mid);
    (void)dfmid;
    return {mid, fmid, max_iterations, false};
}

void require_fitted(const PVModuleParams& params) {
    if (!params.fitted()) {
        throw std::invalid_argument("PV parameters are not fitted; call fit_diode_params first");
    }
}

}  // namespace

void PVModuleParams::validate() const {
    auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
    if (!(imp_stc > 0.0)) fail("imp_stc must be positive");
    if (!(isc_stc > imp_stc)) fail("isc_stc must exceed imp_stc");
    if (!(vmp_stc > 0.0)) fail("vmp_stc must be positive");
    if (!(voc_stc > vmp_stc)) fail("voc_stc must exceed vmp_stc");
    if (!(r_series >= 0.0)) fail("r_series must be non-negative");
    if (!(r_shunt > 0.0)) fail("r_shunt must be positive");
    if (!(diode_ideality >= 1.0 && diode_ideality <= 2.0)) fail("diode_ideality must lie in [1, 2]");
    if (n_cells_series < 1 || n_series_modules < 1 || n_parallel_strings < 1) {
        fail("cell and module counts must be >= 1");
    }
    if (!(g_ref > 0.0)) fail("g_ref must be positive");
}

double clamp_insolation(double g) noexcept {
    if (std::isnan(g)) return kInsolationMin;
    return std::clamp(g, kInsolationMin, kInsolationMax);
}

double clamp_temperature(double t) noexcept {
    if (std::isnan(t)) return 25.0;
    return std::clamp(t, kTemperatureMin, kTemperatureMax);
}

EnvInput EnvInput::clamped(double insolation, double temperature,
                           std::chrono::steady_clock::time_point at) {
    return EnvInput{clamp_insolation(insolation), clamp_temperature(temperature), at};
}

double photocurrent(const EnvInput& env, const PVModuleParams& params) noexcept {
    return (env.insolation / params.g_ref) *
           (params.isc_stc + params.alpha_isc * (env.temperature - params.t_ref));
}

double modified_thermal_voltage(double temperature_c, const PVModuleParams& params) noexcept {
    return params.diode_ideality * params.n_cells_series * kBoltzmann * to_kelvin(temperature_c) /
           kElectronCharge;
}

double saturation_current(double temperature_c, const PVModuleParams& params) {
    require_fitted(params);
    const double t = to_kelvin(temperature_c);
    const double tr = to_kelvin(params.t_ref);
    const auto& d = *params.diode;
    return d.i0_ref * std::pow(t / tr, 3.0) * std::exp(d.activation_k * (1.0 / tr - 1.0 / t));
}

double diode_equation_residual(double v, double i, const EnvInput& env,
                               const PVModuleParams& params) {
    const double a = modified_thermal_voltage(env.temperature, params);
    const double i0 = saturation_current(env.temperature, params);
    const double vd = v + i * params.r_series;
    return photocurrent(env, params) - i0 * std::expm1(vd / a) - vd / params.r_shunt - i;
}

CurrentSolution solve_current(double v, const EnvInput& env, const PVModuleParams& params,
                              const SolveOptions& opts) {
    require_fitted(params);
    const double iph = photocurrent(env, params);
    const double a = modified_thermal_voltage(env.temperature, params);
    const double i0 = saturation_current(env.temperature, params);
    const double rs = params.r_series;
    const double rsh = params.r_shunt;

    if (rs == 0.0) {
        const double i = iph - i0 * std::expm1(v / a) - v / rsh;
        return {i, 0.0, 0, true};
    }

    auto fn = [&](double i) {
        const double vd = v + i * rs;
        const double e = std::exp(vd / a);
        const double f = iph - i0 * (e - 1.0) - vd / rsh - i;
        const double df = -i0 * rs / a * e - rs / rsh - 1.0;
        return std::pair{f, df};
    };

    // f is strictly decreasing in I; widen until the bracket holds a sign change.
    double hi = std::max(iph, 0.0);
    for (int k = 0; k < 64 && fn(hi).first > 0.0; ++k) hi += std::max(1.0, std::abs(hi));
    double lo = std::min(0.0, -v / rs);
    for (int k = 0; k < 64 && fn(lo).first < 0.0; ++k) lo -= std::max(1.0, std::abs(lo));
    if (fn(hi).first == 0.0) return {hi, 0.0, 0, true};

    const double guess = iph - i0 * std::expm1(v / a) - v / rsh;
    const auto r = safeguarded_newton(fn, lo, hi, guess, opts.max_iterations, opts.residual_tolerance);
    return {r.x, r.fx, r.iterations, r.converged};
}

double current_at_voltage(double v, const EnvInput& env, const PVModuleParams& params) {
    const auto sol = solve_current(v, env, params);
    if (!sol.converged) {
        spdlog::warn("single-diode solve did not converge at V={:.6g} (G={:.6g}, T={:.6g}); "
                     "using bracketed value {:.9g} A",
                     v, env.insolation, env.temperature, sol.current);
    }
    return sol.current;
}

double open_circuit_voltage(const EnvInput& env, const PVModuleParams& params) {
    require_fitted(params);
    const double iph = photocurrent(env, params);
    if (iph <= 0.0) return 0.0;
    const double a = modified_thermal_voltage(env.temperature, params);
    const double i0 = saturation_current(env.temperature, params);
    const double rsh = params.r_shunt;

    auto fn = [&](double v) {
        const double e = std::exp(v / a);
        return std::pair{iph - i0 * (e - 1.0) - v / rsh, -i0 / a * e - 1.0 / rsh};
    };
    const double hi = a * std::log1p(iph / i0);
    const auto r = safeguarded_newton(fn, 0.0, hi, hi, 200, 1e-13);
    if (!r.converged) {
        spdlog::warn("open-circuit voltage solve did not converge (G={:.6g}, T={:.6g})",
                     env.insolation, env.temperature);
    }
    return r.x;
}

double array_current_at_voltage(double v_array, const EnvInput& env,
                                const PVModuleParams& params, bool* substituted) {
    const auto sol = solve_current(v_array / params.n_series_modules, env, params);
    if (substituted != nullptr) *substituted = !sol.converged;
    if (!sol.converged) {
        spdlog::warn("single-diode solve did not converge at array V={:.6g}; using bracketed value",
                     v_array);
    }
    return sol.current * params.n_parallel_strings;
}

double array_open_circuit_voltage(const EnvInput& env, const PVModuleParams& params) {
    return open_circuit_voltage(env, params) * params.n_series_modules;
}

IVCurve iv_curve(const EnvInput& env, const PVModuleParams& params, int n_points) {
    if (n_points < 2) throw std::invalid_argument("iv_curve needs at least 2 points");
    IVCurve curve;
    curve.env = env;
    const double voc = array_open_circuit_voltage(env, params);
    if (voc <= 0.0) {
        curve.points.push_back({0.0, array_current_at_voltage(0.0, env, params)});
        return curve;
    }
    curve.points.reserve(static_cast<std::size_t>(n_points));
    for (int k = 0; k < n_points; ++k) {
        const double v = (k == n_points - 1) ? voc : voc * k / (n_points - 1);
        curve.points.push_back({v, array_current_at_voltage(v, env, params)});
    }
    return curve;
}

PowerPoint mpp_bruteforce(const EnvInput& env, const PVModuleParams& params) {
    const double voc = array_open_circuit_voltage(env, params);
    if (voc <= 0.0) return {0.0, 0.0};

    auto power = [&](double v) { return v * array_current_at_voltage(v, env, params); };

    constexpr int kGrid = 2001;
    int best = 0;
    double best_p = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < kGrid; ++k) {
        const double p = power(voc * k / (kGrid - 1));
        if (p > best_p) {
            best_p = p;
            best = k;
        }
    }

    double lo = voc * std::max(best - 1, 0) / (kGrid - 1);
    double hi = voc * std::min(best + 1, kGrid - 1) / (kGrid - 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double p1 = power(x1);
    double p2 = power(x2);
    while (hi - lo > 1e-10 * std::max(1.0, voc)) {
        if (p1 < p2) {
            lo = x1;
            x1 = x2;
            p1 = p2;
            x2 = lo + inv_phi * (hi - lo);
            p2 = power(x2);
        } else {
            hi = x2;
            x2 = x1;
            p2 = p1;
            x1 = hi - inv_phi * (hi - lo);
            p1 = power(x1);
        }
    }
    const double v_star = 0.5 * (lo + hi);
    const double p_star = power(v_star);
    if (p_star >= best_p) return {v_star, p_star};
    return {voc * best / (kGrid - 1), best_p};
}

PVModuleParams fit_diode_params(const PVModuleParams& datasheet) {
    datasheet.validate();
    PVModuleParams out = datasheet;

    // Voc point at reference conditions: Iph = isc_stc, I = 0, Rs drops out.
    const double a_ref = modified_thermal_voltage(out.t_ref, out);
    const double i0_ref = (out.isc_stc - out.voc_stc / out.r_shunt) / std::expm1(out.voc_stc / a_ref);
    if (!(i0_ref > 0.0) || !std::isfinite(i0_ref)) {
        throw FitFailure("no positive saturation current reproduces Voc", {});
    }

    // Same constraint 25 K hotter, using the datasheet temperature coefficients.
    const double dt = 25.0;
    const double t_hot = out.t_ref + dt;
    const double iph_hot = out.isc_stc + out.alpha_isc * dt;
    const double voc_hot = out.voc_stc + out.beta_voc * dt;
    const double a_hot = modified_thermal_voltage(t_hot, out);
    const double i0_hot = (iph_hot - voc_hot / out.r_shunt) / std::expm1(voc_hot / a_hot);
    if (!(voc_hot > 0.0) || !(i0_hot > 0.0) || !std::isfinite(i0_hot)) {
        throw FitFailure("temperature coefficients give no valid hot Voc point", {});
    }
    const double tr = to_kelvin(out.t_ref);
    const double th = to_kelvin(t_hot);
    const double activation = (3.0 * std::log(th / tr) - std::log(i0_hot / i0_ref)) / (1.0 / th - 1.0 / tr);
    out.diode = DiodeFit{i0_ref, activation};

    const EnvInput stc{out.g_ref, out.t_ref, {}};
    auto imp_residual = [&](double rs) {
        PVModuleParams trial = out;
        trial.r_series = rs;
        return solve_current(out.vmp_stc, stc, trial).current - out.imp_stc;
    };

    // Current at Vmp falls monotonically with Rs; at Rs = (Voc-Vmp)/Imp it is below zero.
    double rs_lo = 0.0;
    double rs_hi = (out.voc_stc - out.vmp_stc) / out.imp_stc;
    if (imp_residual(rs_lo) < 0.0) {
        out.r_series = 0.0;
        const double imp_rel = imp_residual(0.0) / out.imp_stc;
        throw FitFailure("(Vmp, Imp) lies above the Rs = 0 curve; lower the ideality factor",
                         {0.0, 0.0, imp_rel});
    }
    for (int it = 0; it < 200 && rs_hi - rs_lo > 1e-13; ++it) {
        const double mid = 0.5 * (rs_lo + rs_hi);
        if (imp_residual(mid) > 0.0) {
            rs_lo = mid;
        } else {
            rs_hi = mid;
        }
    }
    out.r_series = 0.5 * (rs_lo + rs_hi);

    FitFailure::Residuals res;
    res.isc = solve_current(0.0, stc, out).current / out.isc_stc - 1.0;
    res.voc = open_circuit_voltage(stc, out) / out.voc_stc - 1.0;
    res.imp = solve_current(out.vmp_stc, stc, out).current / out.imp_stc - 1.0;
    constexpr double kTol = 0.02;
    if (std::abs(res.isc) > kTol || std::abs(res.voc) > kTol || std::abs(res.imp) > kTol) {
        throw FitFailure("fitted model misses a datasheet point by more than 2%", res);
    }
    return out;
}

const PVModuleParams& default_module() {
    static const PVModuleParams fitted = fit_diode_params(PVModuleParams{});
    return fitted;
}

}  // namespace pvhil::pv
