#include "pvhil/service.hpp"

#include <spdlog/spdlog.h>

namespace pvhil::runtime {

nlohmann::json counters_json(const skt::IngestCounters& c) {
    nlohmann::json vars = nlohmann::json::array();
    const auto& schema = c.schema();
    for (std::size_t i = 0; i < schema.size(); ++i) {
        vars.push_back({{"name", schema[i].name},
                        {"target", std::string(skt::to_string(schema[i].target))},
                        {"count", c.variable_count(i)}});
    }
    nlohmann::json clients = nlohmann::json::array();
    for (const auto& cl : c.clients()) {
        clients.push_back({{"address", cl.address},
                           {"role", cl.role ? std::string(skt::to_string(*cl.role)) : std::string("all")},
                           {"packets", cl.packets},
                           {"rate", cl.rate}});
    }
    return {{"insolation_count", c.target_count(skt::VarTarget::Insolation)},
            {"temperature_count", c.target_count(skt::VarTarget::Temperature)},
            {"packets", c.packets()},
            {"dropped_nan", c.dropped_nan()},
            {"malformed", c.malformed()},
            {"variables", vars},
            {"clients", clients}};
}

telemetry::Counters sample_counters(const skt::IngestCounters& c) {
    return {c.target_count(skt::VarTarget::Insolation), c.target_count(skt::VarTarget::Temperature)};
}

Service::Service(AppConfig cfg, plant::Pacing mode)
    : cfg_(std::move(cfg)), mode_(mode), plant_(std::make_unique<plant::Plant>(cfg_.plant)) {}

Service::~Service() { stop_network(); }

void Service::start_network() {
    if (mode_ == plant::Pacing::Realtime && !gateway_) {
        gateway_ = std::make_unique<skt::SktGateway>(
            cfg_.skt, [p = plant_.get()](const plant::EnvUpdate& u) { p->post_env(u); });
        gateway_->start();
    }
    if (!api_) {
        PlantHandle h;
        h.hub = &hub_;
        h.post_command = [p = plant_.get()](plant::Command c) { p->post_command(std::move(c)); };
        const auto* gw = gateway_.get();
        h.counters = [gw]() -> nlohmann::json {
            if (gw == nullptr) {
                return {{"insolation_count", 0}, {"temperature_count", 0}, {"packets", 0},
                        {"dropped_nan", 0},      {"malformed", 0},         {"variables", nlohmann::json::array()},
                        {"clients", nlohmann::json::array()}};
            }
            return counters_json(gw->counters());
        };
        h.mode = mode_;
        h.limits = cfg_.plant.limits;
        h.pv = cfg_.plant.pv;
        h.ivcurve_points = cfg_.api.ivcurve_points;
        api_ = std::make_unique<OperatorApi>(cfg_.api.bind, cfg_.api.port, std::move(h));
        api_->start();
    }
}

void Service::stop_network() {
    if (api_) api_->stop();
    if (gateway_) gateway_->stop();
}

ScenarioSummary Service::run(const ScenarioScript& script, std::optional<std::filesystem::path> out,
                             telemetry::Format format, std::stop_token stop) {
    RunOptions opts;
    opts.mode = mode_;
    opts.out = std::move(out);
    opts.format = format;
    opts.hub = &hub_;
    opts.stop = stop;
    if (gateway_) {
        const auto* gw = gateway_.get();
        opts.counters = [gw] { return sample_counters(gw->counters()); };
    }
    return run_scenario(script, *plant_, opts);
}

ScenarioSummary Service::serve(std::optional<std::filesystem::path> out, telemetry::Format format,
                               std::stop_token stop) {
    ScenarioScript forever;
    forever.name = "serve";
    forever.duration = 1e9;  // ~31 years of simulated time
    return run(forever, std::move(out), format, stop);
}

std::uint16_t Service::skt_port() const noexcept { return gateway_ ? gateway_->port() : 0; }
std::uint16_t Service::api_port() const noexcept { return api_ ? api_->port() : 0; }
const skt::IngestCounters* Service::counters() const noexcept {
    return gateway_ ? &gateway_->counters() : nullptr;
}

}  // namespace pvhil::runtime
