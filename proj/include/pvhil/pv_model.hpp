#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pvhil::pv {

inline constexpr double kBoltzmann = 1.380649e-23;    // J/K
inline constexpr double kElectronCharge = 1.602176634e-19;  // C
inline constexpr double kKelvinOffset = 273.15;

inline constexpr double kInsolationMin = 0.0;
inline constexpr double kInsolationMax = 1600.0;
inline constexpr double kTemperatureMin = -40.0;
inline constexpr double kTemperatureMax = 90.0;

/// Saturation-current law fitted from the datasheet:
/// I0(T) = i0_ref * (T/Tref)^3 * exp(activation_k * (1/Tref - 1/T)), T in kelvin.
struct DiodeFit {
    double i0_ref = 0.0;
    double activation_k = 0.0;
};

/// Datasheet plus single-diode parameters of one module, and array counts.
/// `diode` is empty until fit_diode_params() has completed the set.
struct PVModuleParams {
    double isc_stc = 8.6;
    double voc_stc = 37.2;
    double vmp_stc = 30.0;
    double imp_stc = 8.0;
    double alpha_isc = 0.004;   // A/degC
    double beta_voc = -0.11;    // V/degC
    int n_cells_series = 60;
    double diode_ideality = 1.3;
    double r_series = 0.35;
    double r_shunt = 300.0;
    int n_series_modules = 1;
    int n_parallel_strings = 1;
    double g_ref = 1000.0;
    double t_ref = 25.0;

    std::optional<DiodeFit> diode;

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;
    bool fitted() const noexcept { return diode.has_value(); }
};

/// Latest insolation (W/m^2) and cell temperature (degC).
struct EnvInput {
    double insolation = 1000.0;
    double temperature = 25.0;
    std::chrono::steady_clock::time_point received_at{};

    /// Builds an input with both values clamped to the accepted sensor range.
    static EnvInput clamped(double insolation, double temperature,
                            std::chrono::steady_clock::time_point at = {});
};

double clamp_insolation(double g) noexcept;
double clamp_temperature(double t) noexcept;

struct IVPoint {
    double voltage = 0.0;
    double current = 0.0;
};

struct IVCurve {
    std::vector<IVPoint> points;
    EnvInput env;
};

class NonConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FitFailure : public std::runtime_error {
public:
    struct Residuals {
        double isc = 0.0;  // relative
        double voc = 0.0;
        double imp = 0.0;
    };
    FitFailure(const std::string& what, Residuals r)
        : std::runtime_error(what), residuals_(r) {}
    const Residuals& residuals() const noexcept { return residuals_; }

private:
    Residuals residuals_;
};

struct SolveOptions {
    int max_iterations = 100;
    double residual_tolerance = 1e-12;
};

struct CurrentSolution {
    double current = 0.0;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;  // false: `current` is the last bracketed bisection value
};

// Module-level quantities. All of these require params.fitted().

double photocurrent(const EnvInput& env, const PVModuleParams& params) noexcept;

/// Thermal voltage of the whole cell string times the ideality factor, n*Ns*k*T/q.
double modified_thermal_voltage(double temperature_c, const PVModuleParams& params) noexcept;

double saturation_current(double temperature_c, const PVModuleParams& params);

/// Implicit-equation residual Iph - I0*(exp((V+I*Rs)/a) - 1) - (V+I*Rs)/Rsh - I.
double diode_equation_residual(double v, double i, const EnvInput& env,
                               const PVModuleParams& params);

/// Safeguarded Newton with bisection fallback on the implicit single-diode equation.
CurrentSolution solve_current(double v, const EnvInput& env, const PVModuleParams& params,
                              const SolveOptions& opts = {});

/// Convenience wrapper: on non-convergence logs a warning and returns the bracketed value.
double current_at_voltage(double v, const EnvInput& env, const PVModuleParams& params);

double open_circuit_voltage(const EnvInput& env, const PVModuleParams& params);

// Array-level quantities (ideal series/parallel scaling of identical modules).

double array_current_at_voltage(double v_array, const EnvInput& env,
                                const PVModuleParams& params,
                                bool* substituted = nullptr);
double array_open_circuit_voltage(const EnvInput& env, const PVModuleParams& params);

/// n_points samples uniformly spaced on [0, Voc] at array level. A dark array
/// (Voc == 0) collapses to the single point (0, 0).
IVCurve iv_curve(const EnvInput& env, const PVModuleParams& params, int n_points);

struct PowerPoint {
    double voltage = 0.0;
    double power = 0.0;
};

/// 2001-point voltage scan over [0, Voc] followed by golden-section refinement.
PowerPoint mpp_bruteforce(const EnvInput& env, const PVModuleParams& params);

/// Completes a datasheet: photocurrent pinned to isc_stc, I0 from the Voc point,
/// series resistance fitted through (Vmp, Imp), and the I0 temperature law from
/// the Voc temperature coefficient. Throws FitFailure with residuals on failure.
PVModuleParams fit_diode_params(const PVModuleParams& datasheet);

/// The default 60-cell datasheet, fitted. Computed once.
const PVModuleParams& default_module();

}  // namespace pvhil::pv
