#include "pvhil/skt_codec.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace pvhil::skt {

namespace {

void put_word(Bytes& out, std::uint32_t w, ByteOrder order) {
    if (order == ByteOrder::Big) {
        out.push_back(static_cast<std::uint8_t>(w >> 24));
        out.push_back(static_cast<std::uint8_t>(w >> 16));
        out.push_back(static_cast<std::uint8_t>(w >> 8));
        out.push_back(static_cast<std::uint8_t>(w));
    } else {
        out.push_back(static_cast<std::uint8_t>(w));
        out.push_back(static_cast<std::uint8_t>(w >> 8));
        out.push_back(static_cast<std::uint8_t>(w >> 16));
        out.push_back(static_cast<std::uint8_t>(w >> 24));
    }
}

std::uint32_t get_word(const std::uint8_t* p, ByteOrder order) {
    if (order == ByteOrder::Big) {
        return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
               (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
    }
    return (std::uint32_t{p[3]} << 24) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[1]} << 8) |
           std::uint32_t{p[0]};
}

}  // namespace

std::string_view to_string(VarKind k) { return k == VarKind::Float32 ? "float32" : "int32"; }

std::string_view to_string(VarTarget t) {
    switch (t) {
        case VarTarget::Insolation: return "insolation";
        case VarTarget::Temperature: return "temperature";
        case VarTarget::Ignored: return "ignored";
    }
    return "?";
}

std::string_view to_string(ByteOrder o) { return o == ByteOrder::Big ? "big" : "little"; }

VarKind parse_var_kind(std::string_view s) {
    if (s == "float32" || s == "FLOAT32") return VarKind::Float32;
    if (s == "int32" || s == "INT32") return VarKind::Int32;
    throw std::invalid_argument("unknown variable kind: " + std::string(s));
}

VarTarget parse_var_target(std::string_view s) {
    if (s == "insolation" || s == "INSOLATION") return VarTarget::Insolation;
    if (s == "temperature" || s == "TEMPERATURE") return VarTarget::Temperature;
    if (s == "ignored" || s == "IGNORED") return VarTarget::Ignored;
    throw std::invalid_argument("unknown variable target: " + std::string(s));
}

ByteOrder parse_byte_order(std::string_view s) {
    if (s == "big") return ByteOrder::Big;
    if (s == "little") return ByteOrder::Little;
    throw std::invalid_argument("unknown byte order: " + std::string(s));
}

SktVariableSchema::SktVariableSchema(std::vector<VariableDescriptor> vars) : vars_(std::move(vars)) {
    if (vars_.empty()) throw std::invalid_argument("schema needs at least one variable");
    std::unordered_set<std::string> names;
    bool has_insolation = false;
    bool has_temperature = false;
    for (const auto& v : vars_) {
        if (!names.insert(v.name).second) {
            throw std::invalid_argument("duplicate schema variable name: " + v.name);
        }
        bool& seen = v.target == VarTarget::Insolation ? has_insolation : has_temperature;
        if (v.target != VarTarget::Ignored) {
            if (seen) throw std::invalid_argument("schema maps two variables to " + std::string(to_string(v.target)));
            seen = true;
        }
    }
}

SktVariableSchema SktVariableSchema::default_schema() {
    return SktVariableSchema({{"i_python1", VarKind::Float32, VarTarget::Insolation},
                              {"f_python1", VarKind::Float32, VarTarget::Temperature}});
}

std::optional<std::size_t> SktVariableSchema::index_of(VarTarget target) const noexcept {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].target == target) return i;
    }
    return std::nullopt;
}

bool SktPacket::has_nan() const noexcept {
    for (double v : values) {
        if (std::isnan(v)) return true;
    }
    return false;
}

Bytes encode_packet(std::span<const double> values, const SktVariableSchema& schema, ByteOrder order) {
    if (values.size() != schema.size()) {
        throw ArityMismatch("expected " + std::to_string(schema.size()) + " values, got " +
                            std::to_string(values.size()));
    }
    Bytes out;
    out.reserve(schema.frame_bytes());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (!std::isfinite(v)) throw NonFiniteValue("non-finite value for " + schema[i].name);
        if (schema[i].kind == VarKind::Float32) {
            put_word(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), order);
        } else {
            if (v != std::trunc(v) || v < -2147483648.0 || v > 2147483647.0) {
                throw CodecError("value for INT32 variable " + schema[i].name +
                                 " is not a 32-bit integer");
            }
            put_word(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)), order);
        }
    }
    return out;
}

SktPacket decode_packet(std::span<const std::uint8_t> bytes, const SktVariableSchema& schema,
                        ByteOrder order) {
    if (bytes.size() != schema.frame_bytes()) {
        throw MalformedFrame("frame of " + std::to_string(bytes.size()) + " bytes; expected " +
                             std::to_string(schema.frame_bytes()));
    }
    SktPacket pkt;
    pkt.values.reserve(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const std::uint32_t w = get_word(bytes.data() + 4 * i, order);
        if (schema[i].kind == VarKind::Float32) {
            pkt.values.push_back(static_cast<double>(std::bit_cast<float>(w)));
        } else {
            pkt.values.push_back(static_cast<double>(static_cast<std::int32_t>(w)));
        }
    }
    return pkt;
}

FrameAssembler::FrameAssembler(std::size_t frame_bytes) : frame_bytes_(frame_bytes) {
    if (frame_bytes_ == 0) throw std::invalid_argument("frame size must be positive");
}

void FrameAssembler::feed(std::span<const std::uint8_t> data,
                          const std::function<void(std::span<const std::uint8_t>)>& on_frame) {
    buffer_.insert(buffer_.end(), data.begin(), data.end());
    std::size_t offset = 0;
    while (buffer_.size() - offset >= frame_bytes_) {
        on_frame(std::span<const std::uint8_t>(buffer_.data() + offset, frame_bytes_));
        offset += frame_bytes_;
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    std::string out;
    char buf[4];
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        std::snprintf(buf, sizeof buf, i == 0 ? "%02X" : " %02X", bytes[i]);
        out += buf;
    }
    return out;
}

}  // namespace pvhil::skt
