#include "pvhil/operator_api.hpp"

#include <deque>
#include <set>
#include <system_error>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

namespace pvhil::runtime {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using asio::ip::tcp;
using nlohmann::ordered_json;

namespace {

constexpr auto kCurveRefresh = std::chrono::milliseconds(200);
constexpr std::size_t kStreamQueueLimit = 64;

ordered_json versioned() { return ordered_json{{"v", kApiSchemaVersion}}; }

ApiResponse error(int status, const std::string& message) {
    auto body = versioned();
    body["error"] = message;
    return {status, std::move(body)};
}

ApiResponse accepted(const plant::Command& cmd) {
    auto body = versioned();
    body["accepted"] = true;
    body["command"] = plant::describe(cmd);
    return {202, std::move(body)};
}

ordered_json with_version(const ordered_json& inner) {
    auto body = versioned();
    for (auto it = inner.begin(); it != inner.end(); ++it) body[it.key()] = it.value();
    return body;
}

std::string path_of(const std::string& target) {
    const auto q = target.find('?');
    return q == std::string::npos ? target : target.substr(0, q);
}

std::string action_of(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("action") || !body["action"].is_string()) {
        throw std::invalid_argument("body must be an object with a string \"action\"");
    }
    return body["action"].get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------------------
// ApiHandler

ApiHandler::ApiHandler(PlantHandle plant) : plant_(std::move(plant)) {}

std::optional<ApiResponse> ApiHandler::reject_offline() const {
    if (plant_.mode == plant::Pacing::Offline) {
        return error(409, "commands are not accepted during an OFFLINE run");
    }
    return std::nullopt;
}

ApiResponse ApiHandler::handle(const std::string& method, const std::string& target, const std::string& body) {
    const auto path = path_of(target);
    const bool get = method == "GET";
    const bool post = method == "POST";

    if (path == "/state" || path == "/ivcurve" || path == "/counters") {
        if (!get) return error(405, "use GET");
        if (path == "/counters") {
            return {200, with_version(plant_.counters ? ordered_json(plant_.counters()) : ordered_json::object())};
        }
        const auto latest = plant_.hub ? plant_.hub->latest() : nullptr;
        if (!latest) return error(503, "no telemetry yet");
        if (path == "/state") return {200, with_version(telemetry::to_json(*latest))};
        return {200, ivcurve()};
    }
    if (path == "/load" || path == "/breaker" || path == "/fault") {
        if (!post) return error(405, "use POST");
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            return error(400, std::string("invalid JSON: ") + e.what());
        }
        if (auto r = reject_offline()) return *r;
        try {
            if (path == "/load") return post_load(parsed);
            if (path == "/breaker") return post_breaker(parsed);
            return post_fault(parsed);
        } catch (const std::invalid_argument& e) {
            return error(400, e.what());
        }
    }
    return error(404, "no such endpoint: " + path);
}

ApiResponse ApiHandler::post_load(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("p_setpoint") || !body["p_setpoint"].is_number()) {
        throw std::invalid_argument("body must be an object with a numeric \"p_setpoint\"");
    }
    plant::LoadCommand cmd;
    cmd.p_setpoint = body["p_setpoint"].get<double>();
    if (body.contains("power_factor")) {
        if (!body["power_factor"].is_number()) throw std::invalid_argument("\"power_factor\" must be a number");
        cmd.power_factor = body["power_factor"].get<double>();
    }
    try {
        plant::validate_load(cmd, plant_.limits);
    } catch (const std::out_of_range& e) {
        auto r = error(400, e.what());
        r.body["range"] = {plant_.limits.p_min, plant_.limits.p_max};
        return r;
    }
    plant::Command c = plant::SetLoad{cmd};
    plant_.post_command(c);
    return accepted(c);
}

ApiResponse ApiHandler::post_breaker(const nlohmann::json& body) {
    const auto cmd = control::parse_breaker_command(action_of(body));
    if (const auto latest = plant_.hub ? plant_.hub->latest() : nullptr) {
        control::BreakerState probe;
        probe.position = latest->breaker_position;
        try {
            (void)control::breaker_command(probe, cmd, latest->fault_active);
        } catch (const control::IllegalTransition& e) {
            auto r = error(409, e.what());
            r.body["breaker_position"] = std::string(control::to_string(latest->breaker_position));
            return r;
        }
    }
    plant_.post_command(cmd);
    return accepted(cmd);
}

ApiResponse ApiHandler::post_fault(const nlohmann::json& body) {
    const auto cmd = control::parse_fault_command(action_of(body));
    plant_.post_command(cmd);
    return accepted(cmd);
}

ordered_json ApiHandler::ivcurve() {
    const auto latest = plant_.hub ? plant_.hub->latest() : nullptr;
    if (!latest) return versioned();
    const auto env = pv::EnvInput::clamped(latest->insolation, latest->temperature);

    std::lock_guard lock(curve_mutex_);
    const auto now = std::chrono::steady_clock::now();
    const bool same_env = curve_env_ && curve_env_->insolation == env.insolation &&
                          curve_env_->temperature == env.temperature;
    if (curve_cache_.is_null() || (!same_env && now - curve_at_ >= kCurveRefresh)) {
        const auto curve = pv::iv_curve(env, plant_.pv, plant_.ivcurve_points);
        ordered_json pts = ordered_json::array();
        double best_v = 0.0, best_i = 0.0, best_p = 0.0;
        for (const auto& pt : curve.points) {
            const double p = pt.voltage * pt.current;
            pts.push_back({{"v", pt.voltage}, {"i", pt.current}, {"p", p}});
            if (p > best_p) {
                best_v = pt.voltage;
                best_i = pt.current;
                best_p = p;
            }
        }
        curve_cache_ = ordered_json{{"insolation", env.insolation},
                                    {"temperature", env.temperature},
                                    {"points", std::move(pts)},
                                    {"mpp", {{"v", best_v}, {"i", best_i}, {"p", best_p}}}};
        curve_env_ = env;
        curve_at_ = now;
    }
    auto body = with_version(curve_cache_);
    body["operating_point"] = {{"v", latest->pv_v}, {"i", latest->pv_i}, {"p", latest->pv_p}};
    return body;
}

std::string ApiHandler::stream_message(const telemetry::TelemetrySample& s) {
    return with_version(telemetry::to_json(s)).dump();
}

// ---------------------------------------------------------------------------
// Transport

class OperatorApi::Impl {
public:
    Impl(std::string bind, std::uint16_t port, PlantHandle plant)
        : bind_(std::move(bind)), requested_port_(port), handler_(std::move(plant)), acceptor_(io_) {}
    Impl(const Impl&) = delete;
    Impl& operator=(const Impl&) = delete;

    ~Impl() { stop(); }

    void start() {
        const tcp::endpoint ep(asio::ip::make_address(bind_), requested_port_);
        boost::system::error_code ec;
        acceptor_.open(ep.protocol(), ec);
        if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
        if (!ec) acceptor_.bind(ep, ec);
        if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
        if (ec) {
            throw std::system_error(ec.value(), std::system_category(),
                                    "operator API bind " + ep.address().to_string() + ":" + std::to_string(ep.port()));
        }
        port_ = acceptor_.local_endpoint().port();
        spdlog::info("operator API listening on {}:{}", bind_, port_);
        do_accept();
        thread_ = std::thread([this] { io_.run(); });
    }

    void stop() {
        if (!thread_.joinable()) return;
        asio::post(io_, [this] {
            boost::system::error_code ec;
            acceptor_.close(ec);
            for (auto& weak : sessions_) {
                if (auto s = weak.lock()) s->close();
            }
        });
        thread_.join();
        // Nothing may post into io_ once it is gone.
        std::set<std::uint64_t> ids;
        {
            std::lock_guard lock(subs_mutex_);
            ids.swap(subscriptions_);
        }
        if (auto* hub = handler_.plant().hub) {
            for (auto id : ids) hub->unsubscribe(id);
        }
    }

    std::uint16_t port() const noexcept { return port_; }

private:
    struct Closable {
        virtual ~Closable() = default;
        virtual void close() = 0;
    };

    class WsSession : public Closable, public std::enable_shared_from_this<WsSession> {
    public:
        WsSession(Impl& api, tcp::socket socket) : api_(api), ws_(std::move(socket)) {}

        ~WsSession() override { unsubscribe(); }

        void run(http::request<http::string_body> req) {
            ws_.set_option(websocket::stream_base::decorator([](websocket::response_type& res) {
                res.set(http::field::server, "pvhil");
            }));
            ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
        }

        void close() override {
            beast::error_code ec;
            beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
            beast::get_lowest_layer(ws_).close();
        }

    private:
        void on_accept(beast::error_code ec) {
            if (ec) return;
            auto* hub = api_.handler_.plant().hub;
            if (hub != nullptr) {
                std::weak_ptr<WsSession> weak = shared_from_this();
                auto exec = ws_.get_executor();
                sub_id_ = hub->subscribe([weak, exec](const std::shared_ptr<const telemetry::TelemetrySample>& s) {
                    asio::post(exec, [weak, s] {
                        if (auto self = weak.lock()) self->push(ApiHandler::stream_message(*s));
                    });
                });
                std::lock_guard lock(api_.subs_mutex_);
                api_.subscriptions_.insert(sub_id_);
            }
            do_read();
        }

        void do_read() {
            ws_.async_read(rx_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->unsubscribe();
                    return;
                }
                self->rx_.consume(self->rx_.size());
                self->do_read();
            });
        }

        void push(std::string msg) {
            if (closed_) return;
            // Drop the oldest queued message, never the one being written.
            if (queue_.size() >= kStreamQueueLimit) queue_.erase(queue_.begin() + 1);
            queue_.push_back(std::move(msg));
            if (queue_.size() == 1) do_write();
        }

        void do_write() {
            ws_.text(true);
            ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->unsubscribe();
                    self->queue_.clear();
                    return;
                }
                self->queue_.pop_front();
                if (!self->queue_.empty()) self->do_write();
            });
        }

        void unsubscribe() {
            closed_ = true;
            if (sub_id_ == 0) return;
            const auto id = std::exchange(sub_id_, 0);
            bool owned = false;
            {
                std::lock_guard lock(api_.subs_mutex_);
                owned = api_.subscriptions_.erase(id) > 0;
            }
            if (owned) api_.handler_.plant().hub->unsubscribe(id);
        }

        Impl& api_;
        websocket::stream<beast::tcp_stream> ws_;
        beast::flat_buffer rx_;
        std::deque<std::string> queue_;
        std::uint64_t sub_id_ = 0;
        bool closed_ = false;
    };

    class HttpSession : public Closable, public std::enable_shared_from_this<HttpSession> {
    public:
        HttpSession(Impl& api, tcp::socket socket) : api_(api), stream_(std::move(socket)) {}

        void run() { do_read(); }

        void close() override {
            beast::error_code ec;
            stream_.socket().shutdown(tcp::socket::shutdown_both, ec);
            stream_.close();
        }

    private:
        void do_read() {
            req_ = {};
            stream_.expires_after(std::chrono::seconds(30));
            http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                self->on_read(ec);
            });
        }

        void on_read(beast::error_code ec) {
            if (ec) {
                close();
                return;
            }
            if (websocket::is_upgrade(req_)) {
                if (path_of(std::string(req_.target())) != "/stream") {
                    write(make_response(error(404, "websocket endpoint is /stream")));
                    return;
                }
                stream_.expires_never();
                auto ws = std::make_shared<WsSession>(api_, stream_.release_socket());
                api_.track(ws);
                ws->run(std::move(req_));
                return;
            }
            if (req_.method() == http::verb::options) {
                http::response<http::string_body> res{http::status::no_content, req_.version()};
                add_common_headers(res);
                res.keep_alive(req_.keep_alive());
                write(std::move(res));
                return;
            }
            auto r = api_.handler_.handle(std::string(req_.method_string()), std::string(req_.target()),
                                          req_.body());
            write(make_response(r));
        }

        template <class Res>
        void add_common_headers(Res& res) const {
            res.set(http::field::server, "pvhil");
            res.set(http::field::access_control_allow_origin, "*");
            res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
            res.set(http::field::access_control_allow_headers, "Content-Type");
        }

        http::response<http::string_body> make_response(const ApiResponse& r) const {
            http::response<http::string_body> res{static_cast<http::status>(r.status), req_.version()};
            add_common_headers(res);
            res.set(http::field::content_type, "application/json");
            res.keep_alive(req_.keep_alive());
            res.body() = r.body.dump();
            res.prepare_payload();
            return res;
        }

        void write(http::response<http::string_body> res) {
            auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
            const bool keep = sp->keep_alive();
            http::async_write(stream_, *sp, [self = shared_from_this(), sp, keep](beast::error_code ec, std::size_t) {
                if (ec || !keep) {
                    self->close();
                    return;
                }
                self->do_read();
            });
        }

        Impl& api_;
        beast::tcp_stream stream_;
        beast::flat_buffer buffer_;
        http::request<http::string_body> req_;
    };

    void track(const std::shared_ptr<Closable>& s) {
        sessions_.erase(std::remove_if(sessions_.begin(), sessions_.end(), [](const auto& w) { return w.expired(); }),
                        sessions_.end());
        sessions_.push_back(s);
    }

    void do_accept() {
        acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec != asio::error::operation_aborted) {
                    spdlog::warn("operator API accept failed: {}", ec.message());
                    do_accept();
                }
                return;
            }
            auto session = std::make_shared<HttpSession>(*this, std::move(socket));
            track(session);
            session->run();
            do_accept();
        });
    }

    std::string bind_;
    std::uint16_t requested_port_;
    ApiHandler handler_;
    std::mutex subs_mutex_;
    std::set<std::uint64_t> subscriptions_;
    asio::io_context io_;
    tcp::acceptor acceptor_;
    std::vector<std::weak_ptr<Closable>> sessions_;
    std::uint16_t port_ = 0;
    std::thread thread_;
};

OperatorApi::OperatorApi(std::string bind, std::uint16_t port, PlantHandle plant)
    : impl_(std::make_unique<Impl>(std::move(bind), port, std::move(plant))) {}

OperatorApi::~OperatorApi() = default;

void OperatorApi::start() { impl_->start(); }
void OperatorApi::stop() { impl_->stop(); }
std::uint16_t OperatorApi::port() const noexcept { return impl_->port(); }

}  // namespace pvhil::runtime
