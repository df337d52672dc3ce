#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvhil/control.hpp"
#include "pvhil/plant.hpp"

namespace pvhil::telemetry {

struct Counters {
    std::uint64_t insolation_count = 0;
    std::uint64_t temperature_count = 0;
    bool operator==(const Counters&) const = default;
};

struct Flags {
    bool undervoltage = false;
    bool degraded_realtime = false;
    bool solver_substituted = false;
    bool operator==(const Flags&) const = default;
};

/// Snapshot streamed to the operator console and persisted to disk.
/// Field order here is the CSV column order.
struct TelemetrySample {
    double t_sim = 0.0;
    double wall_clock = 0.0;  // unix seconds; equals t_sim in OFFLINE runs
    double v_dc = 0.0;
    double pv_v = 0.0;
    double pv_i = 0.0;
    double pv_p = 0.0;
    double insolation = 0.0;
    double temperature = 0.0;
    double load_p_setpoint = 0.0;
    double load_p_actual = 0.0;
    double ac_vrms = 0.0;
    control::BreakerPosition breaker_position = control::BreakerPosition::Closed;
    bool fault_active = false;
    Counters counters;
    Flags flags;

    bool operator==(const TelemetrySample&) const = default;
};

TelemetrySample make_sample(const plant::PlantState& state, Counters counters, double wall_clock,
                            bool degraded_realtime);

/// Keys in CSV column order, counters and flags nested.
nlohmann::ordered_json to_json(const TelemetrySample& s);
TelemetrySample sample_from_json(const nlohmann::json& j);

const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string to_csv_row(const TelemetrySample& s);

enum class Format { Jsonl, Csv };
Format parse_format(std::string_view s);
std::string_view to_string(Format f);

class TelemetryWriteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One record per line. Flushes at least once per second of wall time so the
/// file can be tailed mid-run.
class TelemetryWriter {
public:
    TelemetryWriter(const std::filesystem::path& path, Format format);

    /// Throws TelemetryWriteError when the stream goes bad.
    void write(const TelemetrySample& sample);
    void flush();

    std::uint64_t records() const noexcept { return records_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    Format format_;
    std::ofstream out_;
    std::uint64_t records_ = 0;
    std::chrono::steady_clock::time_point last_flush_;
};

/// TelemetryWriter on its own thread, for paced runs where the stepper must
/// never wait on the disk. Write errors latch failed() instead of throwing.
class BackgroundTelemetryWriter {
public:
    BackgroundTelemetryWriter(const std::filesystem::path& path, Format format);
    ~BackgroundTelemetryWriter();
    BackgroundTelemetryWriter(const BackgroundTelemetryWriter&) = delete;
    BackgroundTelemetryWriter& operator=(const BackgroundTelemetryWriter&) = delete;

    void enqueue(const TelemetrySample& sample);
    /// Drains the queue, flushes, and joins the thread.
    void close();

    bool failed() const noexcept { return failed_.load(); }
    std::uint64_t records() const noexcept { return records_.load(); }

private:
    void run();

    TelemetryWriter writer_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<TelemetrySample> queue_;
    bool closing_ = false;
    std::atomic<bool> failed_{false};
    std::atomic<std::uint64_t> records_{0};
    std::thread thread_;
};

/// Fan-out point between the stepper and any number of readers. The stepper
/// only ever takes a short lock; subscriber callbacks must not block.
class TelemetryHub {
public:
    using Callback = std::function<void(const std::shared_ptr<const TelemetrySample>&)>;

    /// Per-tick snapshot, served by polling readers.
    void update_latest(const TelemetrySample& sample);
    /// Decimated stream sample; also becomes the latest snapshot.
    void publish(const TelemetrySample& sample);

    std::shared_ptr<const TelemetrySample> latest() const;
    std::shared_ptr<const TelemetrySample> latest_published() const;

    std::uint64_t subscribe(Callback cb);
    void unsubscribe(std::uint64_t id);
    std::size_t subscriber_count() const;

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const TelemetrySample> latest_;
    std::shared_ptr<const TelemetrySample> latest_published_;
    std::map<std::uint64_t, Callback> subscribers_;
    std::uint64_t next_id_ = 1;
};

}  // namespace pvhil::telemetry
