#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pvhil/config.hpp"
#include "pvhil/control.hpp"
#include "pvhil/plant.hpp"
#include "pvhil/pv_model.hpp"
#include "pvhil/scenario.hpp"
#include "pvhil/skt_codec.hpp"
#include "pvhil/telemetry.hpp"

namespace py = pybind11;
using namespace pvhil;

namespace {

pv::EnvInput env_of(double g, double t) { return pv::EnvInput::clamped(g, t); }

skt::ByteOrder order_of(const std::string& s) { return skt::parse_byte_order(s); }

std::string run_offline(const std::string& script_text, const std::optional<std::filesystem::path>& out,
                        const std::string& format, const std::string& config_json) {
    const auto cfg = runtime::config_from_json(config_json.empty() ? nlohmann::json::object()
                                                                   : nlohmann::json::parse(config_json));
    auto plant_cfg = cfg.plant;
    plant_cfg.sim.pacing = plant::Pacing::Offline;
    runtime::RunOptions opts;
    opts.out = out;
    opts.format = telemetry::parse_format(format);
    py::gil_scoped_release release;
    return runtime::to_json(runtime::run_scenario(runtime::parse_scenario(script_text), plant_cfg, opts)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "PV hardware-in-the-loop twin: single-diode model, SKT codec and offline runs";

    py::register_exception<pv::FitFailure>(m, "FitFailure", PyExc_RuntimeError);
    py::register_exception<skt::CodecError>(m, "CodecError", PyExc_ValueError);
    py::register_exception<runtime::ScriptParseError>(m, "ScriptParseError", PyExc_ValueError);
    py::register_exception<runtime::ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<pv::DiodeFit>(m, "DiodeFit")
        .def_readonly("i0_ref", &pv::DiodeFit::i0_ref)
        .def_readonly("activation_k", &pv::DiodeFit::activation_k);

    py::class_<pv::PVModuleParams>(m, "PVModuleParams")
        .def(py::init<>())
        .def_readwrite("isc_stc", &pv::PVModuleParams::isc_stc)
        .def_readwrite("voc_stc", &pv::PVModuleParams::voc_stc)
        .def_readwrite("vmp_stc", &pv::PVModuleParams::vmp_stc)
        .def_readwrite("imp_stc", &pv::PVModuleParams::imp_stc)
        .def_readwrite("alpha_isc", &pv::PVModuleParams::alpha_isc)
        .def_readwrite("beta_voc", &pv::PVModuleParams::beta_voc)
        .def_readwrite("n_cells_series", &pv::PVModuleParams::n_cells_series)
        .def_readwrite("diode_ideality", &pv::PVModuleParams::diode_ideality)
        .def_readwrite("r_series", &pv::PVModuleParams::r_series)
        .def_readwrite("r_shunt", &pv::PVModuleParams::r_shunt)
        .def_readwrite("n_series_modules", &pv::PVModuleParams::n_series_modules)
        .def_readwrite("n_parallel_strings", &pv::PVModuleParams::n_parallel_strings)
        .def_readwrite("g_ref", &pv::PVModuleParams::g_ref)
        .def_readwrite("t_ref", &pv::PVModuleParams::t_ref)
        .def_readonly("diode", &pv::PVModuleParams::diode)
        .def_property_readonly("fitted", &pv::PVModuleParams::fitted)
        .def("validate", &pv::PVModuleParams::validate);

    m.def("default_module", &pv::default_module, "Default datasheet, already fitted");
    m.def("fit", &pv::fit_diode_params, py::arg("datasheet"), "Completes a datasheet with single-diode parameters");

    const auto& dm = pv::default_module();
    m.def(
        "photocurrent", [](double g, double t, const pv::PVModuleParams& p) { return pv::photocurrent(env_of(g, t), p); },
        py::arg("insolation"), py::arg("temperature"), py::arg("params") = dm);
    m.def(
        "current_at_voltage",
        [](double v, double g, double t, const pv::PVModuleParams& p) {
            return pv::current_at_voltage(v, env_of(g, t), p);
        },
        py::arg("voltage"), py::arg("insolation"), py::arg("temperature"), py::arg("params") = dm);
    m.def(
        "open_circuit_voltage",
        [](double g, double t, const pv::PVModuleParams& p) { return pv::open_circuit_voltage(env_of(g, t), p); },
        py::arg("insolation"), py::arg("temperature"), py::arg("params") = dm);
    m.def(
        "iv_curve",
        [](double g, double t, int n, const pv::PVModuleParams& p) {
            std::vector<std::pair<double, double>> out;
            for (const auto& pt : pv::iv_curve(env_of(g, t), p, n).points) out.emplace_back(pt.voltage, pt.current);
            return out;
        },
        py::arg("insolation"), py::arg("temperature"), py::arg("points") = 101, py::arg("params") = dm,
        "Array (voltage, current) pairs from short circuit to open circuit");
    m.def(
        "mpp",
        [](double g, double t, const pv::PVModuleParams& p) {
            const auto r = pv::mpp_bruteforce(env_of(g, t), p);
            return std::make_pair(r.voltage, r.power);
        },
        py::arg("insolation"), py::arg("temperature"), py::arg("params") = dm, "(voltage, power) at maximum power");

    py::class_<control::MpptState>(m, "MpptState")
        .def(py::init<>())
        .def_readwrite("v_ref", &control::MpptState::v_ref)
        .def_readwrite("last_power", &control::MpptState::last_power)
        .def_readwrite("last_direction", &control::MpptState::last_direction)
        .def_readwrite("step_size", &control::MpptState::step_size)
        .def_readwrite("enabled", &control::MpptState::enabled)
        .def_readwrite("v_max", &control::MpptState::v_max);
    m.def("pno_step", &control::pno_step, py::arg("state"), py::arg("measured_power"));

    m.def(
        "load_impedance",
        [](double p, double pf, double vrms) {
            const auto z = plant::load_command_to_impedance({p, pf}, vrms);
            return std::make_pair(z.r, z.x);
        },
        py::arg("p_setpoint"), py::arg("power_factor") = 0.95, py::arg("ac_vrms") = 120.0,
        "(r, x) in ohms of the series R/L load");

    const auto schema = skt::SktVariableSchema::default_schema();
    m.def(
        "encode_packet",
        [schema](const std::vector<double>& values, const std::string& order) {
            const auto b = skt::encode_packet(values, schema, order_of(order));
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        },
        py::arg("values"), py::arg("byte_order") = "big", "Frame for the default (insolation, temperature) schema");
    m.def(
        "decode_packet",
        [schema](const py::bytes& data, const std::string& order) {
            const std::string s = data;
            const std::vector<std::uint8_t> b(s.begin(), s.end());
            return skt::decode_packet(b, schema, order_of(order)).values;
        },
        py::arg("data"), py::arg("byte_order") = "big");

    m.def("default_config_json", [] { return runtime::config_to_json(runtime::default_config()).dump(); });
    m.def("run_scenario_offline", &run_offline, py::arg("script"), py::arg("out") = std::nullopt,
          py::arg("format") = "jsonl", py::arg("config_json") = "", "Runs a scenario script; returns the summary as JSON text");
}
