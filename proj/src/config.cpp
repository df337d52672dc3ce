#include "pvhil/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace pvhil::runtime {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads keys out of one config section and rejects anything it did not consume.
class Section {
public:
    Section(const json& root, const std::string& name) : name_(name) {
        if (root.contains(name)) {
            obj_ = root.at(name);
            if (!obj_.is_object()) throw ConfigError("section '" + name + "' must be an object");
        } else {
            obj_ = json::object();
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    void read_optional(const char* key, std::optional<double>& out) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        const auto& v = obj_.at(key);
        if (v.is_null()) {
            out.reset();
        } else if (v.is_number()) {
            out = v.get<double>();
        } else {
            throw ConfigError(name_ + "." + key + " must be a number or null");
        }
    }

    const json* raw(const char* key) {
        seen_.insert(key);
        return obj_.contains(key) ? &obj_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : obj_.items()) {
            if (!seen_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
        }
    }

private:
    std::string name_;
    json obj_;
    std::set<std::string> seen_;
};

template <typename Parse>
auto parse_enum(const std::string& where, const std::string& text, Parse parse) {
    try {
        return parse(text);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

ordered_json optional_to_json(const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<std::uint16_t> env_port(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    char* end = nullptr;
    const long port = std::strtol(v, &end, 10);
    if (*end != '\0' || port < 0 || port > 65535) {
        throw ConfigError(std::string(name) + " is not a valid port: " + v);
    }
    return static_cast<std::uint16_t>(port);
}

}  // namespace

AppConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    static const std::set<std::string> sections{"pv", "sim", "protection", "load", "skt", "api", "telemetry"};
    for (const auto& [k, v] : j.items()) {
        if (!sections.count(k)) throw ConfigError("unknown config section '" + k + "'");
    }

    AppConfig cfg;

    Section pv(j, "pv");
    auto& ds = cfg.datasheet;
    pv.read("isc_stc", ds.isc_stc);
    pv.read("voc_stc", ds.voc_stc);
    pv.read("vmp_stc", ds.vmp_stc);
    pv.read("imp_stc", ds.imp_stc);
    pv.read("alpha_isc", ds.alpha_isc);
    pv.read("beta_voc", ds.beta_voc);
    pv.read("n_cells_series", ds.n_cells_series);
    pv.read("diode_ideality", ds.diode_ideality);
    pv.read("r_series", ds.r_series);
    pv.read("r_shunt", ds.r_shunt);
    pv.read("n_series_modules", ds.n_series_modules);
    pv.read("n_parallel_strings", ds.n_parallel_strings);
    pv.read("g_ref", ds.g_ref);
    pv.read("t_ref", ds.t_ref);
    pv.finish();
    try {
        cfg.plant.pv = pv::fit_diode_params(ds);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("pv: ") + e.what());
    }

    Section sim(j, "sim");
    auto& sc = cfg.plant.sim;
    sim.read("dt", sc.dt);
    sim.read("c_dc", sc.c_dc);
    sim.read("v_dc_ref", sc.v_dc_ref);
    sim.read("v_dc_initial", sc.v_dc_initial);
    sim.read("v_dc_max", sc.v_dc_max);
    sim.read("converter_efficiency", sc.converter_efficiency);
    sim.read("ac_vrms_nominal", sc.ac_vrms_nominal);
    sim.read("telemetry_decimation", sc.telemetry_decimation);
    std::string pacing = sc.pacing == plant::Pacing::Realtime ? "realtime" : "offline";
    sim.read("pacing", pacing);
    if (pacing == "realtime") {
        sc.pacing = plant::Pacing::Realtime;
    } else if (pacing == "offline") {
        sc.pacing = plant::Pacing::Offline;
    } else {
        throw ConfigError("sim.pacing must be 'realtime' or 'offline'");
    }
    sim.read("mppt_period", sc.mppt_period);
    sim.read("mppt_step", sc.mppt_step);
    sim.read("dc_link_time_constant", sc.dc_link_time_constant);
    sim.read("initial_insolation", sc.initial_insolation);
    sim.read("initial_temperature", sc.initial_temperature);
    sim.finish();
    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sim: ") + e.what());
    }

    Section prot(j, "protection");
    auto& pc = cfg.plant.protection;
    prot.read_optional("trip_threshold", pc.trip_threshold);
    prot.read("trip_delay", pc.trip_delay);
    prot.read("fault_impedance", pc.fault_impedance);
    prot.read_optional("fault_auto_clear", pc.fault_auto_clear);
    prot.finish();
    if (!(pc.fault_impedance > 0.0)) throw ConfigError("protection.fault_impedance must be positive");
    if (!(pc.trip_delay >= 0.0)) throw ConfigError("protection.trip_delay must be >= 0");

    Section load(j, "load");
    load.read("p_setpoint", cfg.plant.initial_load.p_setpoint);
    load.read("power_factor", cfg.plant.initial_load.power_factor);
    load.read("p_min", cfg.plant.limits.p_min);
    load.read("p_max", cfg.plant.limits.p_max);
    load.finish();
    if (!(cfg.plant.limits.p_min > 0.0 && cfg.plant.limits.p_max >= cfg.plant.limits.p_min)) {
        throw ConfigError("load: need 0 < p_min <= p_max");
    }
    try {
        plant::validate_load(cfg.plant.initial_load, cfg.plant.limits);
    } catch (const std::out_of_range& e) {
        throw ConfigError(std::string("load: ") + e.what());
    }

    Section skt(j, "skt");
    skt.read("bind", cfg.skt.bind);
    skt.read("port", cfg.skt.port);
    std::string order(skt::to_string(cfg.skt.byte_order));
    skt.read("byte_order", order);
    cfg.skt.byte_order = parse_enum("skt.byte_order", order, skt::parse_byte_order);
    skt.read("echo", cfg.skt.echo);
    skt.read("accept_role_header", cfg.skt.accept_role_header);
    if (const auto* vars = skt.raw("variables")) {
        if (!vars->is_array()) throw ConfigError("skt.variables must be an array");
        std::vector<skt::VariableDescriptor> descs;
        for (const auto& v : *vars) {
            skt::VariableDescriptor d;
            try {
                d.name = v.at("name").get<std::string>();
                d.kind = parse_enum("skt.variables.kind", v.value("kind", std::string("float32")),
                                    skt::parse_var_kind);
                d.target = parse_enum("skt.variables.target", v.value("target", std::string("ignored")),
                                      skt::parse_var_target);
            } catch (const json::exception& e) {
                throw ConfigError(std::string("skt.variables: ") + e.what());
            }
            descs.push_back(std::move(d));
        }
        try {
            cfg.skt.schema = skt::SktVariableSchema(std::move(descs));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("skt.variables: ") + e.what());
        }
    }
    skt.finish();

    Section api(j, "api");
    api.read("bind", cfg.api.bind);
    api.read("port", cfg.api.port);
    api.read("ivcurve_points", cfg.api.ivcurve_points);
    api.finish();
    if (cfg.api.ivcurve_points < 2) throw ConfigError("api.ivcurve_points must be >= 2");

    Section tel(j, "telemetry");
    std::string format(telemetry::to_string(cfg.telemetry.format));
    tel.read("format", format);
    cfg.telemetry.format = parse_enum("telemetry.format", format, telemetry::parse_format);
    tel.finish();

    return cfg;
}

ordered_json config_to_json(const AppConfig& cfg) {
    const auto& ds = cfg.datasheet;
    const auto& sc = cfg.plant.sim;
    const auto& pc = cfg.plant.protection;
    ordered_json vars = ordered_json::array();
    for (const auto& v : cfg.skt.schema.variables()) {
        vars.push_back({{"name", v.name},
                        {"kind", std::string(skt::to_string(v.kind))},
                        {"target", std::string(skt::to_string(v.target))}});
    }
    return ordered_json{
        {"pv",
         {{"isc_stc", ds.isc_stc},
          {"voc_stc", ds.voc_stc},
          {"vmp_stc", ds.vmp_stc},
          {"imp_stc", ds.imp_stc},
          {"alpha_isc", ds.alpha_isc},
          {"beta_voc", ds.beta_voc},
          {"n_cells_series", ds.n_cells_series},
          {"diode_ideality", ds.diode_ideality},
          {"r_series", ds.r_series},
          {"r_shunt", ds.r_shunt},
          {"n_series_modules", ds.n_series_modules},
          {"n_parallel_strings", ds.n_parallel_strings},
          {"g_ref", ds.g_ref},
          {"t_ref", ds.t_ref}}},
        {"sim",
         {{"dt", sc.dt},
          {"c_dc", sc.c_dc},
          {"v_dc_ref", sc.v_dc_ref},
          {"v_dc_initial", sc.v_dc_initial},
          {"v_dc_max", sc.v_dc_max},
          {"converter_efficiency", sc.converter_efficiency},
          {"ac_vrms_nominal", sc.ac_vrms_nominal},
          {"telemetry_decimation", sc.telemetry_decimation},
          {"pacing", sc.pacing == plant::Pacing::Realtime ? "realtime" : "offline"},
          {"mppt_period", sc.mppt_period},
          {"mppt_step", sc.mppt_step},
          {"dc_link_time_constant", sc.dc_link_time_constant},
          {"initial_insolation", sc.initial_insolation},
          {"initial_temperature", sc.initial_temperature}}},
        {"protection",
         {{"trip_threshold", optional_to_json(pc.trip_threshold)},
          {"trip_delay", pc.trip_delay},
          {"fault_impedance", pc.fault_impedance},
          {"fault_auto_clear", optional_to_json(pc.fault_auto_clear)}}},
        {"load",
         {{"p_setpoint", cfg.plant.initial_load.p_setpoint},
          {"power_factor", cfg.plant.initial_load.power_factor},
          {"p_min", cfg.plant.limits.p_min},
          {"p_max", cfg.plant.limits.p_max}}},
        {"skt",
         {{"bind", cfg.skt.bind},
          {"port", cfg.skt.port},
          {"byte_order", std::string(skt::to_string(cfg.skt.byte_order))},
          {"echo", cfg.skt.echo},
          {"accept_role_header", cfg.skt.accept_role_header},
          {"variables", vars}}},
        {"api", {{"bind", cfg.api.bind}, {"port", cfg.api.port}, {"ivcurve_points", cfg.api.ivcurve_points}}},
        {"telemetry", {{"format", std::string(telemetry::to_string(cfg.telemetry.format))}}},
    };
}

void apply_port_overrides(AppConfig& cfg) {
    if (auto p = env_port("PVHIL_SKT_PORT")) cfg.skt.port = *p;
    if (auto p = env_port("PVHIL_API_PORT")) cfg.api.port = *p;
}

AppConfig load_config(const std::filesystem::path& path, bool apply_env) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    auto cfg = config_from_json(j);
    if (apply_env) apply_port_overrides(cfg);
    return cfg;
}

AppConfig default_config() { return config_from_json(json::object()); }

}  // namespace pvhil::runtime
