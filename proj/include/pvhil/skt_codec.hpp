#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pvhil::skt {

// GTNET-SKT style wire format: a frame is N consecutive 32-bit words, one per
// schema variable, with no header or checksum. Big-endian unless configured.

enum class VarKind { Float32, Int32 };
enum class VarTarget { Insolation, Temperature, Ignored };
enum class ByteOrder { Big, Little };

std::string_view to_string(VarKind k);
std::string_view to_string(VarTarget t);
std::string_view to_string(ByteOrder o);
VarKind parse_var_kind(std::string_view s);
VarTarget parse_var_target(std::string_view s);
ByteOrder parse_byte_order(std::string_view s);

struct VariableDescriptor {
    std::string name;
    VarKind kind = VarKind::Float32;
    VarTarget target = VarTarget::Ignored;

    bool operator==(const VariableDescriptor&) const = default;
};

class SktVariableSchema {
public:
    /// Throws std::invalid_argument on empty, duplicate names, or a target mapped twice.
    explicit SktVariableSchema(std::vector<VariableDescriptor> vars);

    /// [("i_python1", FLOAT32, INSOLATION), ("f_python1", FLOAT32, TEMPERATURE)]
    static SktVariableSchema default_schema();

    std::size_t size() const noexcept { return vars_.size(); }
    std::size_t frame_bytes() const noexcept { return 4 * vars_.size(); }
    const std::vector<VariableDescriptor>& variables() const noexcept { return vars_; }
    const VariableDescriptor& operator[](std::size_t i) const { return vars_.at(i); }
    std::optional<std::size_t> index_of(VarTarget target) const noexcept;

    bool operator==(const SktVariableSchema&) const = default;

private:
    std::vector<VariableDescriptor> vars_;
};

class CodecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NonFiniteValue : public CodecError {
public:
    using CodecError::CodecError;
};
class ArityMismatch : public CodecError {
public:
    using CodecError::CodecError;
};
class MalformedFrame : public CodecError {
public:
    using CodecError::CodecError;
};

using Bytes = std::vector<std::uint8_t>;

struct SktPacket {
    std::vector<double> values;  // one per schema variable, exact float/int32 values
    std::string source;
    std::chrono::steady_clock::time_point received_at{};

    bool has_nan() const noexcept;
};

/// Throws ArityMismatch, NonFiniteValue, or CodecError for an INT32 slot whose
/// value is not an integer representable in 32 bits.
Bytes encode_packet(std::span<const double> values, const SktVariableSchema& schema,
                    ByteOrder order = ByteOrder::Big);

/// Exact inverse of encode_packet. Throws MalformedFrame unless the length is
/// exactly 4 * schema size. NaN words decode as NaN; callers decide to drop.
SktPacket decode_packet(std::span<const std::uint8_t> bytes, const SktVariableSchema& schema,
                        ByteOrder order = ByteOrder::Big);

/// Reassembles fixed-size frames from an arbitrarily partitioned byte stream.
class FrameAssembler {
public:
    explicit FrameAssembler(std::size_t frame_bytes);

    /// Appends data and invokes on_frame for every completed frame, in order.
    void feed(std::span<const std::uint8_t> data,
              const std::function<void(std::span<const std::uint8_t>)>& on_frame);

    std::size_t pending_bytes() const noexcept { return buffer_.size(); }
    std::size_t frame_bytes() const noexcept { return frame_bytes_; }

private:
    std::size_t frame_bytes_;
    Bytes buffer_;
};

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace pvhil::skt
