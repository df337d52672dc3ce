#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracle.hpp"
#include "pvhil/pv_model.hpp"

using namespace pvhil;
using pvhil::ref::bisection_current;
using pvhil::ref::bisection_voc;

namespace {

const pv::PVModuleParams& mod() { return pv::default_module(); }

pv::EnvInput env(double g, double t) { return pv::EnvInput::clamped(g, t); }

}  // namespace

// Frozen from an independent 40-digit evaluation of the same fitting rules.
TEST(Fit, DefaultDatasheetMatchesFrozenOracle) {
    const auto& p = mod();
    ASSERT_TRUE(p.fitted());
    EXPECT_NEAR(p.diode->i0_ref, 7.3539769511378029e-8, 7.35e-8 * 1e-9);
    EXPECT_NEAR(p.diode->activation_k, 9532.166386995967, 9532.0 * 1e-9);
    EXPECT_NEAR(p.r_series, 0.18845043421839474, 1e-9);
    EXPECT_DOUBLE_EQ(p.r_shunt, 300.0);
}

TEST(Fit, RoundTripsDatasheetPoints) {
    const auto& p = mod();
    const auto stc = env(1000, 25);
    EXPECT_NEAR(pv::current_at_voltage(0.0, stc, p) / p.isc_stc, 1.0, 0.02);
    EXPECT_NEAR(pv::open_circuit_voltage(stc, p) / p.voc_stc, 1.0, 0.02);
    EXPECT_NEAR(pv::current_at_voltage(p.vmp_stc, stc, p) / p.imp_stc, 1.0, 0.02);
}

TEST(Fit, HotVocFollowsTemperatureCoefficient) {
    const auto& p = mod();
    EXPECT_NEAR(pv::open_circuit_voltage(env(1000, 50), p), p.voc_stc + 25 * p.beta_voc, 1e-9);
}

TEST(Fit, UnreachableDatasheetReportsResiduals) {
    pv::PVModuleParams ds;
    ds.vmp_stc = 36.0;
    ds.imp_stc = 8.5;
    try {
        (void)pv::fit_diode_params(ds);
        FAIL() << "expected FitFailure";
    } catch (const pv::FitFailure& e) {
        EXPECT_LT(e.residuals().imp, -0.02);
    }
}

TEST(Fit, RejectsInvalidDatasheet) {
    pv::PVModuleParams ds;
    ds.imp_stc = 9.0;  // above isc
    EXPECT_THROW((void)pv::fit_diode_params(ds), std::invalid_argument);
    pv::PVModuleParams unfitted;
    EXPECT_THROW((void)pv::saturation_current(25.0, unfitted), std::invalid_argument);
}

TEST(Photocurrent, Examples) {
    const auto& p = mod();
    EXPECT_DOUBLE_EQ(pv::photocurrent(env(0, 25), p), 0.0);
    EXPECT_DOUBLE_EQ(pv::photocurrent(env(p.g_ref, p.t_ref), p), p.isc_stc);
    EXPECT_NEAR(pv::photocurrent(env(500, 25), p), 4.3, 1e-12);
}

TEST(Photocurrent, LinearInInsolation) {
    auto gen = ref::rng(1);
    std::uniform_real_distribution<double> g(0.0, 1600.0), t(-40.0, 90.0);
    const auto& p = mod();
    for (int k = 0; k < 1000; ++k) {
        const double gi = g(gen), ti = t(gen);
        EXPECT_NEAR(pv::photocurrent(env(gi, ti), p), gi / 1000.0 * pv::photocurrent(env(1000, ti), p), 1e-12);
    }
}

TEST(CurrentAtVoltage, Examples) {
    const auto& p = mod();
    const auto stc = env(1000, 25);
    EXPECT_NEAR(pv::current_at_voltage(pv::open_circuit_voltage(stc, p), stc, p), 0.0, 1e-6);
    EXPECT_NEAR(pv::current_at_voltage(0.0, env(0, 25), p), 0.0, 1e-12);
    EXPECT_NEAR(pv::current_at_voltage(0.0, stc, p), bisection_current(0.0, 1000, 25, p), 1e-9);
}

TEST(CurrentAtVoltage, MatchesFrozenOracleValues) {
    const auto& p = mod();
    EXPECT_NEAR(pv::current_at_voltage(0, env(1000, 25), p), 8.5946010541905793, 1e-9);
    EXPECT_NEAR(pv::current_at_voltage(30, env(1000, 25), p), 8.0, 1e-9);
    EXPECT_NEAR(pv::current_at_voltage(20, env(800, 25), p), 6.8060470877494495, 1e-9);
    EXPECT_NEAR(pv::current_at_voltage(35, env(1000, 10), p), 6.3195241294223802, 1e-9);
    EXPECT_NEAR(pv::current_at_voltage(15, env(300, 60), p), 2.5674195443832292, 1e-9);
}

TEST(CurrentAtVoltage, NewtonAgreesWithBisectionOnRandomInputs) {
    auto gen = ref::rng(2);
    std::uniform_real_distribution<double> g(0.0, 1600.0), t(-40.0, 90.0), u(-0.1, 1.1);
    const auto& p = mod();
    for (int k = 0; k < 2000; ++k) {
        const double gi = g(gen), ti = t(gen);
        const double v = u(gen) * std::max(bisection_voc(gi, ti, p), 1.0);
        const auto sol = pv::solve_current(v, env(gi, ti), p);
        ASSERT_TRUE(sol.converged) << "G=" << gi << " T=" << ti << " V=" << v;
        EXPECT_NEAR(sol.current, bisection_current(v, gi, ti, p), 1e-9) << "G=" << gi << " T=" << ti << " V=" << v;
    }
}

TEST(CurrentAtVoltage, ResidualIsSmallAtSolution) {
    const auto& p = mod();
    const auto e = env(700, 40);
    for (double v = 0; v <= 36; v += 1.5) {
        const double i = pv::current_at_voltage(v, e, p);
        EXPECT_NEAR(pv::diode_equation_residual(v, i, e, p), 0.0, 1e-10);
    }
}

TEST(CurrentAtVoltage, ZeroSeriesResistanceIsExplicit) {
    auto p = mod();
    p.r_series = 0.0;
    const auto sol = pv::solve_current(20.0, env(1000, 25), p);
    EXPECT_TRUE(sol.converged);
    EXPECT_NEAR(sol.current, bisection_current(20.0, 1000, 25, p), 1e-9);
}

TEST(CurrentAtVoltage, IterationCapReportsBracketedValue) {
    pv::SolveOptions opts;
    opts.max_iterations = 1;
    opts.residual_tolerance = 0.0;
    const auto sol = pv::solve_current(33.0, env(1000, 25), mod(), opts);
    EXPECT_FALSE(sol.converged);
    EXPECT_TRUE(std::isfinite(sol.current));
}

TEST(OpenCircuitVoltage, MatchesFrozenOracleValues) {
    const auto& p = mod();
    EXPECT_NEAR(pv::open_circuit_voltage(env(1000, 25), p), 37.2, 1e-9);
    EXPECT_NEAR(pv::open_circuit_voltage(env(500, 25), p), 35.78364827639273, 1e-9);
    EXPECT_NEAR(pv::open_circuit_voltage(env(200, 25), p), 33.867708510086266, 1e-9);
    EXPECT_NEAR(pv::open_circuit_voltage(env(1000, 0), p), 39.911704692918323, 1e-9);
    EXPECT_NEAR(pv::open_circuit_voltage(env(1000, 75), p), 31.664917496753826, 1e-9);
    EXPECT_DOUBLE_EQ(pv::open_circuit_voltage(env(0, 25), p), 0.0);
}

TEST(OpenCircuitVoltage, StrictlyDecreasingInTemperature) {
    const auto& p = mod();
    double prev = std::numeric_limits<double>::infinity();
    for (int t = 0; t <= 75; ++t) {
        const double voc = pv::open_circuit_voltage(env(1000, t), p);
        EXPECT_LT(voc, prev) << "T=" << t;
        prev = voc;
    }
}

TEST(IvCurve, TwoPointsAreTheEndpoints) {
    const auto& p = mod();
    const auto c = pv::iv_curve(env(1000, 25), p, 2);
    ASSERT_EQ(c.points.size(), 2u);
    EXPECT_DOUBLE_EQ(c.points[0].voltage, 0.0);
    EXPECT_NEAR(c.points[0].current, bisection_current(0, 1000, 25, p), 1e-9);
    EXPECT_NEAR(c.points[1].voltage, 37.2, 1e-9);
    EXPECT_NEAR(c.points[1].current, 0.0, 1e-6);
}

TEST(IvCurve, InvariantsHoldOnRandomEnvironments) {
    auto gen = ref::rng(3);
    std::uniform_real_distribution<double> g(1.0, 1600.0), t(-40.0, 90.0);
    std::uniform_int_distribution<int> n(2, 300);
    for (int k = 0; k < 200; ++k) {
        const auto c = pv::iv_curve(env(g(gen), t(gen)), mod(), n(gen));
        for (std::size_t i = 1; i < c.points.size(); ++i) {
            EXPECT_GT(c.points[i].voltage, c.points[i - 1].voltage);
            EXPECT_LE(c.points[i].current, c.points[i - 1].current);
        }
    }
}

TEST(IvCurve, ArrayScaling) {
    auto p = mod();
    const auto base = pv::iv_curve(env(800, 30), p, 51);
    p.n_parallel_strings = 2;
    const auto doubled = pv::iv_curve(env(800, 30), p, 51);
    ASSERT_EQ(base.points.size(), doubled.points.size());
    for (std::size_t i = 0; i < base.points.size(); ++i) {
        EXPECT_DOUBLE_EQ(doubled.points[i].voltage, base.points[i].voltage);
        EXPECT_NEAR(doubled.points[i].current, 2.0 * base.points[i].current, 1e-12);
    }
    p.n_parallel_strings = 1;
    p.n_series_modules = 3;
    const auto series = pv::iv_curve(env(800, 30), p, 51);
    for (std::size_t i = 0; i < base.points.size(); ++i) {
        EXPECT_NEAR(series.points[i].voltage, 3.0 * base.points[i].voltage, 1e-9);
        EXPECT_NEAR(series.points[i].current, base.points[i].current, 1e-9);
    }
}

TEST(IvCurve, PassesNearDatasheetMaximumPowerPoint) {
    const auto& p = mod();
    const auto c = pv::iv_curve(env(1000, 25), p, 101);
    // Linear interpolation of the sampled curve at vmp.
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        if (c.points[i].voltage >= p.vmp_stc) {
            const auto& a = c.points[i - 1];
            const auto& b = c.points[i];
            const double i_at = a.current + (b.current - a.current) * (p.vmp_stc - a.voltage) / (b.voltage - a.voltage);
            EXPECT_NEAR(i_at / p.imp_stc, 1.0, 0.02);
            return;
        }
    }
    FAIL() << "curve never reached vmp";
}

TEST(IvCurve, DarkArrayCollapsesToOrigin) {
    const auto c = pv::iv_curve(env(0, 25), mod(), 50);
    ASSERT_EQ(c.points.size(), 1u);
    EXPECT_DOUBLE_EQ(c.points[0].voltage, 0.0);
    EXPECT_NEAR(c.points[0].current, 0.0, 1e-12);
    EXPECT_THROW((void)pv::iv_curve(env(1000, 25), mod(), 1), std::invalid_argument);
}

TEST(Mpp, MatchesFrozenOracleValues) {
    const auto& p = mod();
    struct Case { double g, t, v, pw; };
    for (const auto& c : {Case{1000, 25, 30.2136035333992, 240.089888240524},
                          Case{800, 25, 30.0481343493096, 190.566501357806},
                          Case{1000, 10, 31.9259594902694, 253.442284805324},
                          Case{1000, 50, 27.378619271714, 217.503408786951},
                          Case{500, 25, 29.5298663762606, 116.113281600983}}) {
        const auto m = pv::mpp_bruteforce(env(c.g, c.t), p);
        EXPECT_NEAR(m.power, c.pw, 1e-8) << c.g << "," << c.t;
        EXPECT_NEAR(m.voltage, c.v, 1e-4) << c.g << "," << c.t;
    }
}

TEST(Mpp, Ordering) {
    const auto& p = mod();
    EXPECT_DOUBLE_EQ(pv::mpp_bruteforce(env(0, 25), p).power, 0.0);
    EXPECT_GT(pv::mpp_bruteforce(env(1000, 25), p).power, pv::mpp_bruteforce(env(500, 25), p).power);
    EXPECT_GT(pv::mpp_bruteforce(env(1000, 25), p).power, pv::mpp_bruteforce(env(1000, 50), p).power);
}

TEST(Mpp, DominatesDenseScan) {
    auto gen = ref::rng(4);
    std::uniform_real_distribution<double> g(50.0, 1600.0), t(-40.0, 90.0);
    for (int k = 0; k < 10; ++k) {
        const double gi = g(gen), ti = t(gen);
        const auto m = pv::mpp_bruteforce(env(gi, ti), mod());
        const double scan = ref::scan_max_power(gi, ti, mod(), 4001);
        EXPECT_GE(m.power, scan - 1e-9);
        EXPECT_LT(m.power, scan * (1 + 1e-5));
        EXPECT_GT(m.voltage, 0.0);
        EXPECT_LT(m.voltage, bisection_voc(gi, ti, mod()));
    }
}

TEST(EnvInput, ClampsToSensorRange) {
    const auto e = pv::EnvInput::clamped(2000, 120);
    EXPECT_DOUBLE_EQ(e.insolation, 1600.0);
    EXPECT_DOUBLE_EQ(e.temperature, 90.0);
    const auto lo = pv::EnvInput::clamped(-5, -100);
    EXPECT_DOUBLE_EQ(lo.insolation, 0.0);
    EXPECT_DOUBLE_EQ(lo.temperature, -40.0);
    EXPECT_DOUBLE_EQ(pv::clamp_insolation(std::numeric_limits<double>::infinity()), 1600.0);
}
