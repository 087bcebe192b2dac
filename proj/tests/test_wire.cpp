#include "doctest.h"

#include "atm/rng.hpp"
#include "atm/wire.hpp"
#include "oracles.hpp"
#include "wire_gen.hpp"

using namespace atm;
using namespace atm::wire;

namespace {

std::string hex_upper(ByteView b)
{
    auto s = to_hex(b);
    for (auto& c : s)
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

} // namespace

TEST_CASE("crc16 known answers agree with the bitwise oracle")
{
    CHECK(oracle::crc16_bitwise("123456789") == 0x29B1);
    CHECK(crc16(std::string_view("123456789")) == 0x29B1);
    CHECK(crc16(std::string_view("")) == 0xFFFF);

    DeterministicRng rng(7);
    for (int i = 0; i < 500; ++i) {
        std::string s(static_cast<std::size_t>(rng.uniform_int(0, 64)), '\0');
        for (auto& c : s)
            c = static_cast<char>(rng.uniform_int(0, 255));
        CHECK(crc16(std::string_view(s)) == oracle::crc16_bitwise(s));
    }
}

TEST_CASE("END_SESSION frame layout")
{
    const auto bytes = encode_frame(encode_message(EndSession{}));
    REQUIRE(bytes.size() == 16);
    CHECK(hex_upper(ByteView(bytes.data(), 6)) == "A74D01070008");
    const auto crc = crc16(ByteView(bytes.data(), 14));
    CHECK(bytes[14] == (crc >> 8));
    CHECK(bytes[15] == (crc & 0xFF));
}

TEST_CASE("decode_frame waits for a complete frame")
{
    const auto bytes = encode_frame(encode_message(EndSession{}));
    for (std::size_t n = 0; n < bytes.size(); ++n)
        CHECK_FALSE(decode_frame(ByteView(bytes.data(), n)).has_value());
    const auto d = decode_frame(bytes);
    REQUIRE(d);
    CHECK(d->consumed == bytes.size());
    CHECK(std::get<EndSession>(decode_message(d->frame)) == EndSession{});
}

TEST_CASE("decode_frame takes frames off a stream one at a time")
{
    Bytes stream;
    std::vector<Message> sent{TxnReq{Token{1, 2, 3, 4, 5, 6, 7, 8}, TxnType::Withdraw, 3000}, EndSession{},
                              ErrMsg{ResponseCode::Malformed}};
    for (const auto& m : sent) {
        const auto b = encode_frame(encode_message(m));
        stream.insert(stream.end(), b.begin(), b.end());
    }
    std::vector<Message> got;
    std::size_t off = 0;
    while (auto d = decode_frame(ByteView(stream.data() + off, stream.size() - off))) {
        got.push_back(decode_message(d->frame));
        off += d->consumed;
    }
    CHECK(off == stream.size());
    CHECK(got == sent);
}

TEST_CASE("frame errors")
{
    auto bytes = encode_frame(encode_message(EndSession{}));
    SUBCASE("bad magic")
    {
        bytes[0] = 0xA8;
        CHECK_THROWS_AS(decode_frame(bytes), FrameError);
        try {
            decode_frame(bytes);
        } catch (const FrameError& e) {
            CHECK(e.kind() == FrameErrorKind::BadMagic);
        }
    }
    SUBCASE("version and type are checked after the CRC")
    {
        Frame f{2, MessageType::EndSession, Bytes(8, 0)};
        try {
            decode_frame(encode_frame(f));
            FAIL("accepted version 2");
        } catch (const FrameError& e) {
            CHECK(e.kind() == FrameErrorKind::UnsupportedVersion);
        }
        bytes[3] = 0x42;
        try {
            decode_frame(bytes);
            FAIL("accepted corrupted type");
        } catch (const FrameError& e) {
            CHECK(e.kind() == FrameErrorKind::CrcMismatch);
        }
    }
    SUBCASE("payload limit")
    {
        Frame f{kVersion, MessageType::Err, Bytes(kMaxPayload + 1, 0)};
        CHECK_THROWS_AS(encode_frame(f), FrameError);
    }
}

TEST_CASE("every single-bit flip of a frame is rejected")
{
    const auto good = encode_frame(encode_message(TxnReq{Token{9, 9, 9, 9, 9, 9, 9, 9}, TxnType::Deposit, 5000}));
    int rejected = 0;
    for (std::size_t bit = 0; bit < good.size() * 8; ++bit) {
        auto b = good;
        b[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
        bool accepted = false;
        try {
            auto d = decode_frame(b);
            if (!d) {
                // A length field grown by the flip: pad the stream to the
                // claimed size, the CRC must still catch it.
                b.resize(kHeaderSize + ((std::size_t(b[4]) << 8) | b[5]) + 2, 0);
                d = decode_frame(b);
            }
            accepted = d.has_value();
        } catch (const FrameError&) {
        }
        CHECK_FALSE(accepted);
        rejected += !accepted;
    }
    CHECK(rejected == static_cast<int>(good.size() * 8));
}

TEST_CASE("PIN block known answer and oracle")
{
    CHECK(oracle::pin_block_by_hand("1234", "79927398713") == "041234866D8C678E");
    const auto block = encode_pin_block("1234", "79927398713");
    CHECK(hex_upper(block) == "041234866D8C678E");
    CHECK(extract_pin(block, "79927398713") == "1234");

    DeterministicRng rng(11);
    for (int i = 0; i < 500; ++i) {
        std::string pin(static_cast<std::size_t>(rng.uniform_int(4, 6)), '0');
        for (auto& c : pin)
            c = static_cast<char>('0' + rng.uniform_int(0, 9));
        std::string pan(static_cast<std::size_t>(rng.uniform_int(2, 19)), '0');
        for (auto& c : pan)
            c = static_cast<char>('0' + rng.uniform_int(0, 9));
        const auto b = encode_pin_block(pin, pan);
        CHECK(hex_upper(b) == oracle::pin_block_by_hand(pin, pan));
        CHECK(extract_pin(b, pan) == pin);
    }
}

TEST_CASE("PIN block extracted with the wrong PAN fails on a fill nibble")
{
    const auto block = encode_pin_block("1234", "79927398713");
    try {
        extract_pin(block, "4111111111111111");
        FAIL("extracted with the wrong PAN");
    } catch (const PinBlockError& e) {
        CHECK(e.kind() == PinBlockErrorKind::BadFillNibble);
    }
}

TEST_CASE("PIN block input validation")
{
    auto kind_of = [](auto&& fn) {
        try {
            fn();
        } catch (const PinBlockError& e) {
            return static_cast<int>(e.kind());
        }
        return -1;
    };
    CHECK(kind_of([] { encode_pin_block("123", "79927398713"); }) == int(PinBlockErrorKind::BadPinLength));
    CHECK(kind_of([] { encode_pin_block("1234567", "79927398713"); }) == int(PinBlockErrorKind::BadPinLength));
    CHECK(kind_of([] { encode_pin_block("12a4", "79927398713"); }) == int(PinBlockErrorKind::NonDigit));
    PinBlock bad = encode_pin_block("1234", "79927398713");
    bad[0] ^= 0x10;
    CHECK(kind_of([&] { extract_pin(bad, "79927398713"); }) == int(PinBlockErrorKind::BadControlNibble));
}

TEST_CASE("minutiae payload layout")
{
    const minutiae::FingerprintTemplate t({{10, 20, 90, minutiae::Kind::RidgeEnding}});
    const auto b = encode_minutiae(t);
    CHECK(hex_upper(b) == "0001000A0014005A00");
    CHECK(decode_minutiae(b) == t);
    CHECK_THROWS_AS(decode_minutiae(Bytes{0x00, 0x00}), MalformedPayload);
    CHECK_THROWS_AS(decode_minutiae(Bytes{0x00, 0x01, 0, 10, 0, 20, 0, 90}), MalformedPayload);
    auto bad_kind = b;
    bad_kind.back() = 7;
    CHECK_THROWS_AS(decode_minutiae(bad_kind), MalformedPayload);
}

TEST_CASE("empty template cannot be encoded")
{
    CHECK_THROWS(minutiae::FingerprintTemplate({}));
}

TEST_CASE("randomized message round trips")
{
    DeterministicRng rng(2024);
    for (int type = 0; type < 8; ++type) {
        for (int i = 0; i < 300; ++i) {
            const auto m = test::random_message(rng, type);
            const auto bytes = encode_frame(encode_message(m));
            const auto d = decode_frame(bytes);
            REQUIRE(d);
            CHECK(d->consumed == bytes.size());
            const auto back = decode_message(d->frame);
            CHECK(back == m);
            CHECK(encode_frame(encode_message(back)) == bytes);
        }
    }
}

TEST_CASE("malformed payloads are rejected, not crashed on")
{
    CHECK_THROWS_AS(decode_message(Frame{kVersion, MessageType::EndSession, Bytes(7, 0)}), MalformedPayload);
    CHECK_THROWS_AS(decode_message(Frame{kVersion, MessageType::AuthCardReq, Bytes{0}}), MalformedPayload);
    // PAN with a non-digit
    Bytes auth{3, '1', 'x', '3'};
    auth.resize(auth.size() + 8, 0);
    CHECK_THROWS_AS(decode_message(Frame{kVersion, MessageType::AuthCardReq, auth}), MalformedPayload);
    CHECK_THROWS_AS(decode_message(Frame{kVersion, MessageType::Err, Bytes{0x55}}), MalformedPayload);

    DeterministicRng rng(99);
    for (int i = 0; i < 20000; ++i) {
        Bytes junk(static_cast<std::size_t>(rng.uniform_int(0, 40)));
        for (auto& b : junk)
            b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
        const auto type = static_cast<MessageType>(std::array<int, 8>{1, 2, 3, 4, 5, 6, 7, 0x7F}[rng.uniform_int(0, 7)]);
        try {
            decode_message(Frame{kVersion, type, junk});
        } catch (const MalformedPayload&) {
        }
    }
}

TEST_CASE("tokens in hex")
{
    const Token t{0xde, 0xad, 0xbe, 0xef, 0, 1, 2, 3};
    CHECK(token_hex(t) == "deadbeef00010203");
    CHECK(token_from_hex("DEADBEEF00010203") == t);
    CHECK_FALSE(token_from_hex("deadbeef").has_value());
    CHECK_FALSE(token_from_hex("deadbeef0001020g").has_value());
    CHECK(is_zero(Token{}));
}

TEST_CASE("response code names")
{
    for (int b = 0; b <= 9; ++b) {
        const auto c = response_code_from_byte(static_cast<std::uint8_t>(b));
        REQUIRE(c);
        CHECK(response_code_from_string(to_string(*c)) == c);
    }
    CHECK_FALSE(response_code_from_byte(10).has_value());
    CHECK_FALSE(response_code_from_string("Nope").has_value());
}
