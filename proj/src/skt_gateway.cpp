#include "pvhil/skt_gateway.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <system_error>
#include <thread>

#include <boost/asio.hpp>
#include <spdlog/spdlog.h>

namespace pvhil::skt {

namespace asio = boost::asio;
using asio::ip::tcp;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// IngestCounters

IngestCounters::IngestCounters(const SktVariableSchema& schema)
    : schema_(schema), per_variable_(std::make_unique<std::atomic<std::uint64_t>[]>(schema.size())) {
    for (std::size_t i = 0; i < schema_.size(); ++i) per_variable_[i] = 0;
}

std::uint64_t IngestCounters::variable_count(std::size_t index) const noexcept {
    return index < schema_.size() ? per_variable_[index].load() : 0;
}

std::uint64_t IngestCounters::target_count(VarTarget target) const noexcept {
    const auto idx = schema_.index_of(target);
    return idx ? variable_count(*idx) : 0;
}

std::vector<ClientStats> IngestCounters::clients(Clock::time_point now) const {
    std::lock_guard lock(clients_mutex_);
    std::vector<ClientStats> out;
    for (const auto& [addr, c] : clients_) {
        ClientStats s;
        s.address = addr;
        s.role = c.role;
        s.packets = c.packets;
        const auto window_start = now - kRateWindow;
        const auto n = std::count_if(c.recent.begin(), c.recent.end(),
                                     [&](auto t) { return t > window_start; });
        const auto span = std::clamp<Clock::duration>(now - c.connected_at, std::chrono::seconds(1),
                                                      kRateWindow);
        s.rate = static_cast<double>(n) / std::chrono::duration<double>(span).count();
        out.push_back(std::move(s));
    }
    return out;
}

void IngestCounters::client_connected(const std::string& address, Clock::time_point at) {
    std::lock_guard lock(clients_mutex_);
    auto& c = clients_[address];
    c.connected_at = at;
}

void IngestCounters::client_role(const std::string& address, std::optional<VarTarget> role) {
    std::lock_guard lock(clients_mutex_);
    clients_[address].role = role;
}

void IngestCounters::client_disconnected(const std::string& address) {
    std::lock_guard lock(clients_mutex_);
    clients_.erase(address);
}

void IngestCounters::record_packet(const std::string& address, const std::vector<bool>& applied,
                                   Clock::time_point at) {
    for (std::size_t i = 0; i < applied.size() && i < schema_.size(); ++i) {
        if (applied[i]) ++per_variable_[i];
    }
    ++packets_;
    std::lock_guard lock(clients_mutex_);
    auto& c = clients_[address];
    ++c.packets;
    c.recent.push_back(at);
    while (!c.recent.empty() && c.recent.front() <= at - kRateWindow) c.recent.pop_front();
}

// ---------------------------------------------------------------------------
// Gateway

namespace {

constexpr std::size_t kMaxRoleLine = 64;

std::optional<std::optional<VarTarget>> parse_role_line(std::string line) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    for (auto& ch : line) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (line == "ROLE INSOLATION") return std::optional<VarTarget>(VarTarget::Insolation);
    if (line == "ROLE TEMPERATURE") return std::optional<VarTarget>(VarTarget::Temperature);
    if (line == "ROLE ALL") return std::optional<VarTarget>();
    return std::nullopt;
}

}  // namespace

class SktGateway::Impl {
public:
    Impl(runtime::SktSettings settings, EnvSink sink)
        : settings_(std::move(settings)), sink_(std::move(sink)), counters_(settings_.schema),
          acceptor_(io_) {}
    Impl(const Impl&) = delete;
    Impl& operator=(const Impl&) = delete;

    void start() {
        const tcp::endpoint ep(asio::ip::make_address(settings_.bind), settings_.port);
        boost::system::error_code ec;
        acceptor_.open(ep.protocol(), ec);
        if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
        if (!ec) acceptor_.bind(ep, ec);
        if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
        if (ec) {
            throw std::system_error(ec.value(), std::system_category(),
                                    "SKT gateway bind " + ep.address().to_string() + ":" + std::to_string(ep.port()));
        }
        port_ = acceptor_.local_endpoint().port();
        spdlog::info("SKT gateway listening on {}:{} ({} variables, {}-endian)", settings_.bind, port_,
                     settings_.schema.size(), to_string(settings_.byte_order));
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
        // Cancelled operations drain and run() returns on its own.
        thread_.join();
    }

    ~Impl() { stop(); }

    std::uint16_t port() const noexcept { return port_; }
    const IngestCounters& counters() const noexcept { return counters_; }
    std::size_t connected() const noexcept { return connected_.load(); }

private:
    class Session : public std::enable_shared_from_this<Session> {
    public:
        Session(Impl& gw, tcp::socket socket)
            : gw_(gw), socket_(std::move(socket)), assembler_(gw.settings_.schema.frame_bytes()) {
            boost::system::error_code ec;
            const auto ep = socket_.remote_endpoint(ec);
            address_ = ec ? std::string("unknown") : ep.address().to_string() + ":" + std::to_string(ep.port());
            role_checked_ = !gw_.settings_.accept_role_header;
        }

        void start() {
            gw_.counters_.client_connected(address_, Clock::now());
            ++gw_.connected_;
            spdlog::info("SKT client {} connected", address_);
            do_read();
        }

        void close() {
            boost::system::error_code ec;
            socket_.shutdown(tcp::socket::shutdown_both, ec);
            socket_.close(ec);
        }

        ~Session() {
            --gw_.connected_;
            gw_.counters_.client_disconnected(address_);
        }

    private:
        void do_read() {
            socket_.async_read_some(asio::buffer(read_buf_),
                                    [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
                                        self->on_read(ec, n);
                                    });
        }

        void on_read(boost::system::error_code ec, std::size_t n) {
            if (!ec) {
                if (!consume(std::span<const std::uint8_t>(read_buf_.data(), n))) {
                    close();
                    return;
                }
                do_read();
                return;
            }
            if (assembler_.pending_bytes() > 0 || !prefix_.empty()) {
                gw_.counters_.record_malformed();
                spdlog::warn("SKT client {} closed with a partial frame ({} bytes)", address_,
                             assembler_.pending_bytes() + prefix_.size());
            }
            if (ec != asio::error::eof && ec != asio::error::operation_aborted) {
                spdlog::warn("SKT client {} I/O error: {}", address_, ec.message());
            } else {
                spdlog::info("SKT client {} disconnected", address_);
            }
            close();
        }

        // Returns false when the connection should be dropped.
        bool consume(std::span<const std::uint8_t> data) {
            if (!role_checked_) {
                prefix_.insert(prefix_.end(), data.begin(), data.end());
                static constexpr std::string_view kTag = "ROLE ";
                const std::size_t cmp = std::min(prefix_.size(), kTag.size());
                if (!std::equal(prefix_.begin(), prefix_.begin() + static_cast<std::ptrdiff_t>(cmp), kTag.begin())) {
                    role_checked_ = true;
                } else if (prefix_.size() < kTag.size()) {
                    return true;
                } else {
                    const auto nl = std::find(prefix_.begin(), prefix_.end(), '\n');
                    if (nl == prefix_.end()) {
                        if (prefix_.size() > kMaxRoleLine) {
                            spdlog::warn("SKT client {} sent an over-long role line", address_);
                            return false;
                        }
                        return true;
                    }
                    const auto role = parse_role_line(std::string(prefix_.begin(), nl));
                    if (!role) {
                        spdlog::warn("SKT client {} sent an unknown role line", address_);
                        return false;
                    }
                    role_ = *role;
                    gw_.counters_.client_role(address_, role_);
                    spdlog::info("SKT client {} declared role {}", address_,
                                 role_ ? std::string(to_string(*role_)) : std::string("all"));
                    prefix_.erase(prefix_.begin(), nl + 1);
                    role_checked_ = true;
                }
                Bytes rest;
                rest.swap(prefix_);
                feed(rest);
                return true;
            }
            feed(data);
            return true;
        }

        void feed(std::span<const std::uint8_t> data) {
            assembler_.feed(data, [this](std::span<const std::uint8_t> frame) { on_frame(frame); });
        }

        void on_frame(std::span<const std::uint8_t> frame) {
            const auto& schema = gw_.settings_.schema;
            auto pkt = decode_packet(frame, schema, gw_.settings_.byte_order);
            const auto now = Clock::now();
            if (pkt.has_nan()) {
                gw_.counters_.record_dropped_nan();
                spdlog::warn("SKT client {} sent NaN; packet dropped", address_);
                return;
            }
            plant::EnvUpdate update;
            update.received_at = now;
            std::vector<bool> applied(schema.size(), false);
            for (std::size_t i = 0; i < schema.size(); ++i) {
                const auto target = schema[i].target;
                if (role_ && target != *role_) continue;
                applied[i] = true;
                if (target == VarTarget::Insolation) update.insolation = pkt.values[i];
                if (target == VarTarget::Temperature) update.temperature = pkt.values[i];
            }
            if (update.insolation || update.temperature) gw_.sink_(update);
            gw_.counters_.record_packet(address_, applied, now);
            if (gw_.settings_.echo) send_counters();
        }

        void send_counters() {
            static const SktVariableSchema kEchoSchema({{"insolation_count", VarKind::Int32, VarTarget::Ignored},
                                                        {"temperature_count", VarKind::Int32, VarTarget::Ignored}});
            const auto wrap = [](std::uint64_t v) { return static_cast<double>(v % 2147483648ULL); };
            const std::array<double, 2> vals{wrap(gw_.counters_.target_count(VarTarget::Insolation)),
                                             wrap(gw_.counters_.target_count(VarTarget::Temperature))};
            write_queue_.push_back(encode_packet(vals, kEchoSchema, gw_.settings_.byte_order));
            if (write_queue_.size() == 1) do_write();
        }

        void do_write() {
            asio::async_write(socket_, asio::buffer(write_queue_.front()),
                              [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                                  if (ec) {
                                      self->close();
                                      return;
                                  }
                                  self->write_queue_.pop_front();
                                  if (!self->write_queue_.empty()) self->do_write();
                              });
        }

        Impl& gw_;
        tcp::socket socket_;
        std::string address_;
        std::array<std::uint8_t, 4096> read_buf_{};
        FrameAssembler assembler_;
        bool role_checked_ = false;
        Bytes prefix_;
        std::optional<VarTarget> role_;
        std::deque<Bytes> write_queue_;
    };

    void do_accept() {
        acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec != asio::error::operation_aborted) {
                    spdlog::warn("SKT accept failed: {}", ec.message());
                    do_accept();
                }
                return;
            }
            auto session = std::make_shared<Session>(*this, std::move(socket));
            sessions_.erase(std::remove_if(sessions_.begin(), sessions_.end(),
                                           [](const auto& w) { return w.expired(); }),
                            sessions_.end());
            sessions_.push_back(session);
            session->start();
            do_accept();
        });
    }

    runtime::SktSettings settings_;
    EnvSink sink_;
    IngestCounters counters_;
    std::atomic<std::size_t> connected_{0};
    asio::io_context io_;
    tcp::acceptor acceptor_;
    std::vector<std::weak_ptr<Session>> sessions_;
    std::uint16_t port_ = 0;
    std::thread thread_;
};

SktGateway::SktGateway(runtime::SktSettings settings, EnvSink sink)
    : impl_(std::make_unique<Impl>(std::move(settings), std::move(sink))) {}

SktGateway::~SktGateway() = default;

void SktGateway::start() { impl_->start(); }
void SktGateway::stop() { impl_->stop(); }
std::uint16_t SktGateway::port() const noexcept { return impl_->port(); }
const IngestCounters& SktGateway::counters() const noexcept { return impl_->counters(); }
std::size_t SktGateway::connected_clients() const noexcept { return impl_->connected(); }

}  // namespace pvhil::skt
