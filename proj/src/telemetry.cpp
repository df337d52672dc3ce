#include "pvhil/telemetry.hpp"

#include <fmt/format.h>

namespace pvhil::telemetry {

TelemetrySample make_sample(const plant::PlantState& state, Counters counters, double wall_clock,
                            bool degraded_realtime) {
    TelemetrySample s;
    s.t_sim = state.t_sim;
    s.wall_clock = wall_clock;
    s.v_dc = state.v_dc;
    s.pv_v = state.pv_v;
    s.pv_i = state.pv_i;
    s.pv_p = state.pv_p;
    s.insolation = state.env.insolation;
    s.temperature = state.env.temperature;
    s.load_p_setpoint = state.load.p_setpoint;
    s.load_p_actual = state.load_p;
    s.ac_vrms = state.ac_vrms;
    s.breaker_position = state.breaker.position;
    s.fault_active = state.fault.active;
    s.counters = counters;
    s.flags.undervoltage = state.flags.undervoltage;
    s.flags.solver_substituted = state.flags.solver_substituted;
    s.flags.degraded_realtime = degraded_realtime;
    return s;
}

nlohmann::ordered_json to_json(const TelemetrySample& s) {
    return nlohmann::ordered_json{
        {"t_sim", s.t_sim},
        {"wall_clock", s.wall_clock},
        {"v_dc", s.v_dc},
        {"pv_v", s.pv_v},
        {"pv_i", s.pv_i},
        {"pv_p", s.pv_p},
        {"insolation", s.insolation},
        {"temperature", s.temperature},
        {"load_p_setpoint", s.load_p_setpoint},
        {"load_p_actual", s.load_p_actual},
        {"ac_vrms", s.ac_vrms},
        {"breaker_position", std::string(control::to_string(s.breaker_position))},
        {"fault_active", s.fault_active},
        {"counters",
         {{"insolation_count", s.counters.insolation_count},
          {"temperature_count", s.counters.temperature_count}}},
        {"flags",
         {{"undervoltage", s.flags.undervoltage},
          {"degraded_realtime", s.flags.degraded_realtime},
          {"solver_substituted", s.flags.solver_substituted}}},
    };
}

TelemetrySample sample_from_json(const nlohmann::json& j) {
    TelemetrySample s;
    s.t_sim = j.at("t_sim").get<double>();
    s.wall_clock = j.at("wall_clock").get<double>();
    s.v_dc = j.at("v_dc").get<double>();
    s.pv_v = j.at("pv_v").get<double>();
    s.pv_i = j.at("pv_i").get<double>();
    s.pv_p = j.at("pv_p").get<double>();
    s.insolation = j.at("insolation").get<double>();
    s.temperature = j.at("temperature").get<double>();
    s.load_p_setpoint = j.at("load_p_setpoint").get<double>();
    s.load_p_actual = j.at("load_p_actual").get<double>();
    s.ac_vrms = j.at("ac_vrms").get<double>();
    s.breaker_position = control::parse_breaker_position(j.at("breaker_position").get<std::string>());
    s.fault_active = j.at("fault_active").get<bool>();
    const auto& c = j.at("counters");
    s.counters.insolation_count = c.at("insolation_count").get<std::uint64_t>();
    s.counters.temperature_count = c.at("temperature_count").get<std::uint64_t>();
    const auto& f = j.at("flags");
    s.flags.undervoltage = f.at("undervoltage").get<bool>();
    s.flags.degraded_realtime = f.at("degraded_realtime").get<bool>();
    s.flags.solver_substituted = f.at("solver_substituted").get<bool>();
    return s;
}

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols{
        "t_sim",        "wall_clock",       "v_dc",
        "pv_v",         "pv_i",             "pv_p",
        "insolation",   "temperature",      "load_p_setpoint",
        "load_p_actual", "ac_vrms",         "breaker_position",
        "fault_active", "insolation_count", "temperature_count",
        "undervoltage", "degraded_realtime", "solver_substituted",
    };
    return cols;
}

std::string csv_header() {
    std::string out;
    for (const auto& c : csv_columns()) {
        if (!out.empty()) out += ',';
        out += c;
    }
    return out;
}

std::string to_csv_row(const TelemetrySample& s) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{:d},{},{},{:d},{:d},{:d}", s.t_sim,
                       s.wall_clock, s.v_dc, s.pv_v, s.pv_i, s.pv_p, s.insolation, s.temperature,
                       s.load_p_setpoint, s.load_p_actual, s.ac_vrms,
                       control::to_string(s.breaker_position), s.fault_active,
                       s.counters.insolation_count, s.counters.temperature_count,
                       s.flags.undervoltage, s.flags.degraded_realtime, s.flags.solver_substituted);
}

Format parse_format(std::string_view s) {
    if (s == "jsonl" || s == "JSONL") return Format::Jsonl;
    if (s == "csv" || s == "CSV") return Format::Csv;
    throw std::invalid_argument("unknown telemetry format: " + std::string(s));
}

std::string_view to_string(Format f) { return f == Format::Jsonl ? "jsonl" : "csv"; }

TelemetryWriter::TelemetryWriter(const std::filesystem::path& path, Format format)
    : path_(path), format_(format), out_(path, std::ios::out | std::ios::trunc | std::ios::binary),
      last_flush_(std::chrono::steady_clock::now()) {
    if (!out_) throw TelemetryWriteError("cannot open telemetry file " + path.string());
    if (format_ == Format::Csv) {
        out_ << csv_header() << '\n';
        flush();
    }
}

void TelemetryWriter::write(const TelemetrySample& sample) {
    if (format_ == Format::Jsonl) {
        out_ << to_json(sample).dump() << '\n';
    } else {
        out_ << to_csv_row(sample) << '\n';
    }
    if (!out_) throw TelemetryWriteError("write to " + path_.string() + " failed");
    ++records_;
    if (std::chrono::steady_clock::now() - last_flush_ >= std::chrono::seconds(1)) flush();
}

void TelemetryWriter::flush() {
    out_.flush();
    if (!out_) throw TelemetryWriteError("flush of " + path_.string() + " failed");
    last_flush_ = std::chrono::steady_clock::now();
}

BackgroundTelemetryWriter::BackgroundTelemetryWriter(const std::filesystem::path& path, Format format)
    : writer_(path, format), thread_([this] { run(); }) {}

BackgroundTelemetryWriter::~BackgroundTelemetryWriter() { close(); }

void BackgroundTelemetryWriter::enqueue(const TelemetrySample& sample) {
    {
        std::lock_guard lock(mutex_);
        if (closing_) return;
        queue_.push_back(sample);
    }
    cv_.notify_one();
}

void BackgroundTelemetryWriter::close() {
    {
        std::lock_guard lock(mutex_);
        closing_ = true;
    }
    cv_.notify_one();
    if (thread_.joinable()) thread_.join();
}

void BackgroundTelemetryWriter::run() {
    std::unique_lock lock(mutex_);
    for (;;) {
        cv_.wait_for(lock, std::chrono::milliseconds(500), [this] { return closing_ || !queue_.empty(); });
        std::deque<TelemetrySample> batch;
        batch.swap(queue_);
        const bool done = closing_;
        lock.unlock();
        try {
            if (!failed_) {
                for (const auto& s : batch) writer_.write(s);
                writer_.flush();
                records_ = writer_.records();
            }
        } catch (const TelemetryWriteError&) {
            failed_ = true;
        }
        lock.lock();
        if (done && queue_.empty()) return;
    }
}

void TelemetryHub::update_latest(const TelemetrySample& sample) {
    auto snap = std::make_shared<const TelemetrySample>(sample);
    std::lock_guard lock(mutex_);
    latest_ = std::move(snap);
}

void TelemetryHub::publish(const TelemetrySample& sample) {
    auto snap = std::make_shared<const TelemetrySample>(sample);
    std::lock_guard lock(mutex_);
    latest_ = snap;
    latest_published_ = snap;
    for (auto& [id, cb] : subscribers_) cb(snap);
}

std::shared_ptr<const TelemetrySample> TelemetryHub::latest() const {
    std::lock_guard lock(mutex_);
    return latest_;
}

std::shared_ptr<const TelemetrySample> TelemetryHub::latest_published() const {
    std::lock_guard lock(mutex_);
    return latest_published_;
}

std::uint64_t TelemetryHub::subscribe(Callback cb) {
    std::lock_guard lock(mutex_);
    const auto id = next_id_++;
    subscribers_.emplace(id, std::move(cb));
    return id;
}

void TelemetryHub::unsubscribe(std::uint64_t id) {
    std::lock_guard lock(mutex_);
    subscribers_.erase(id);
}

std::size_t TelemetryHub::subscriber_count() const {
    std::lock_guard lock(mutex_);
    return subscribers_.size();
}

}  // namespace pvhil::telemetry
