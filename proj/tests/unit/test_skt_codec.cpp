#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "oracle.hpp"
#include "pvhil/skt_codec.hpp"

using namespace pvhil;
using namespace pvhil::skt;

namespace {

SktVariableSchema one(VarKind kind) { return SktVariableSchema({{"x", kind, VarTarget::Ignored}}); }

std::vector<double> values(std::initializer_list<double> v) { return v; }

}  // namespace

TEST(Encode, GoldenVectors) {
    EXPECT_EQ(to_hex(encode_packet(values({1.0}), one(VarKind::Float32))), "3F 80 00 00");
    EXPECT_EQ(to_hex(encode_packet(values({1000.0, 25.0}), SktVariableSchema::default_schema())),
              "44 7A 00 00 41 C8 00 00");
    EXPECT_EQ(to_hex(encode_packet(values({1.0}), one(VarKind::Int32))), "00 00 00 01");
    EXPECT_EQ(to_hex(encode_packet(values({-1.0}), one(VarKind::Int32))), "FF FF FF FF");
    EXPECT_EQ(to_hex(encode_packet(values({1.0}), one(VarKind::Float32), ByteOrder::Little)), "00 00 80 3F");
}

TEST(Encode, Rejections) {
    const auto schema = SktVariableSchema::default_schema();
    EXPECT_THROW((void)encode_packet(values({1.0}), schema), ArityMismatch);
    EXPECT_THROW((void)encode_packet(values({std::nan(""), 1.0}), schema), NonFiniteValue);
    EXPECT_THROW((void)encode_packet(values({INFINITY, 1.0}), schema), NonFiniteValue);
    EXPECT_THROW((void)encode_packet(values({1.5}), one(VarKind::Int32)), CodecError);
    EXPECT_THROW((void)encode_packet(values({4294967296.0}), one(VarKind::Int32)), CodecError);
}

TEST(Decode, GoldenVectors) {
    const Bytes b{0x3F, 0x80, 0x00, 0x00};
    EXPECT_EQ(decode_packet(b, one(VarKind::Float32)).values, values({1.0}));
    const Bytes d{0x44, 0x7A, 0x00, 0x00, 0x41, 0xC8, 0x00, 0x00};
    EXPECT_EQ(decode_packet(d, SktVariableSchema::default_schema()).values, values({1000.0, 25.0}));
    const Bytes i{0x80, 0x00, 0x00, 0x00};
    EXPECT_EQ(decode_packet(i, one(VarKind::Int32)).values, values({-2147483648.0}));
}

TEST(Decode, WrongLengthIsMalformed) {
    const Bytes b{0x3F, 0x80, 0x00};
    EXPECT_THROW((void)decode_packet(b, one(VarKind::Float32)), MalformedFrame);
}

TEST(Decode, NanIsSurfacedForTheCaller) {
    const Bytes b{0x7F, 0xC0, 0x00, 0x00};
    EXPECT_TRUE(decode_packet(b, one(VarKind::Float32)).has_nan());
}

TEST(Codec, RoundTripRandomFiniteFloats) {
    auto gen = ref::rng(30);
    std::uniform_int_distribution<std::uint32_t> bits;
    const auto schema = SktVariableSchema::default_schema();
    int checked = 0;
    while (checked < 10000) {
        const float a = std::bit_cast<float>(bits(gen));
        const float b = std::bit_cast<float>(bits(gen));
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        for (auto order : {ByteOrder::Big, ByteOrder::Little}) {
            const std::vector<double> in{a, b};
            const auto out = decode_packet(encode_packet(in, schema, order), schema, order).values;
            ASSERT_EQ(out.size(), 2u);
            EXPECT_TRUE(std::bit_cast<std::uint64_t>(out[0]) == std::bit_cast<std::uint64_t>(in[0]));
            EXPECT_TRUE(std::bit_cast<std::uint64_t>(out[1]) == std::bit_cast<std::uint64_t>(in[1]));
        }
        ++checked;
    }
}

TEST(Codec, RoundTripRandomInt32) {
    auto gen = ref::rng(31);
    std::uniform_int_distribution<std::int32_t> v(std::numeric_limits<std::int32_t>::min(),
                                                  std::numeric_limits<std::int32_t>::max());
    const auto schema = one(VarKind::Int32);
    for (int k = 0; k < 10000; ++k) {
        const std::vector<double> in{static_cast<double>(v(gen))};
        EXPECT_EQ(decode_packet(encode_packet(in, schema), schema).values, in);
    }
}

TEST(Framing, FragmentsReassembleIntoOnePacket) {
    FrameAssembler fa(8);
    const Bytes d{0x44, 0x7A, 0x00, 0x00, 0x41, 0xC8, 0x00, 0x00};
    int frames = 0;
    auto on = [&](std::span<const std::uint8_t>) { ++frames; };
    fa.feed(std::span(d).first(6), on);
    EXPECT_EQ(frames, 0);
    EXPECT_EQ(fa.pending_bytes(), 6u);
    fa.feed(std::span(d).subspan(6), on);
    EXPECT_EQ(frames, 1);
    EXPECT_EQ(fa.pending_bytes(), 0u);
}

TEST(Framing, RandomPartitioningIsInvariant) {
    auto gen = ref::rng(32);
    std::uniform_real_distribution<float> val(-1e4f, 1e4f);
    const auto schema = SktVariableSchema::default_schema();
    for (int trial = 0; trial < 200; ++trial) {
        Bytes stream;
        std::vector<std::vector<double>> sent;
        const int n = 1 + trial % 50;
        for (int k = 0; k < n; ++k) {
            std::vector<double> v{val(gen), val(gen)};
            const auto b = encode_packet(v, schema);
            stream.insert(stream.end(), b.begin(), b.end());
            sent.push_back(v);
        }
        FrameAssembler fa(schema.frame_bytes());
        std::vector<std::vector<double>> got;
        std::uniform_int_distribution<std::size_t> cut(0, 13);
        std::size_t pos = 0;
        while (pos < stream.size()) {
            const std::size_t len = std::min(cut(gen), stream.size() - pos);
            fa.feed(std::span(stream).subspan(pos, len),
                    [&](std::span<const std::uint8_t> f) { got.push_back(decode_packet(f, schema).values); });
            pos += len;
        }
        EXPECT_EQ(got, sent);
        EXPECT_EQ(fa.pending_bytes(), 0u);
    }
}

TEST(Schema, Validation) {
    EXPECT_THROW(SktVariableSchema({}), std::invalid_argument);
    EXPECT_THROW(SktVariableSchema({{"a", VarKind::Float32, VarTarget::Ignored}, {"a", VarKind::Float32, VarTarget::Ignored}}),
                 std::invalid_argument);
    EXPECT_THROW(SktVariableSchema({{"a", VarKind::Float32, VarTarget::Insolation},
                                    {"b", VarKind::Float32, VarTarget::Insolation}}),
                 std::invalid_argument);
    const auto d = SktVariableSchema::default_schema();
    EXPECT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].name, "i_python1");
    EXPECT_EQ(d[1].name, "f_python1");
    EXPECT_EQ(d.index_of(VarTarget::Temperature), 1u);
    EXPECT_FALSE(d.index_of(VarTarget::Ignored).has_value());
}

TEST(Schema, NamesParse) {
    EXPECT_EQ(parse_var_kind("FLOAT32"), VarKind::Float32);
    EXPECT_EQ(parse_var_kind("int32"), VarKind::Int32);
    EXPECT_EQ(parse_var_target("INSOLATION"), VarTarget::Insolation);
    EXPECT_EQ(parse_byte_order("little"), ByteOrder::Little);
    EXPECT_THROW((void)parse_var_kind("float64"), std::invalid_argument);
}
