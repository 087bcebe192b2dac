#include "atm/wire.hpp"

#include <algorithm>

namespace atm::wire {

namespace {

constexpr std::array<std::uint16_t, 256> make_crc_table()
{
    std::array<std::uint16_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        auto crc = static_cast<std::uint16_t>(i << 8);
        for (int bit = 0; bit < 8; ++bit)
            crc = static_cast<std::uint16_t>((crc & 0x8000U) ? (crc << 1) ^ 0x1021U : crc << 1);
        table[i] = crc;
    }
    return table;
}

constexpr auto kCrcTable = make_crc_table();

std::uint16_t crc_update(std::uint16_t crc, std::uint8_t b) noexcept
{
    return static_cast<std::uint16_t>((crc << 8) ^ kCrcTable[((crc >> 8) ^ b) & 0xFFU]);
}

std::uint16_t read_u16(ByteView b, std::size_t at) { return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]); }

int digit_value(char c)
{
    if (c < '0' || c > '9')
        throw PinBlockError(PinBlockErrorKind::NonDigit, "non-digit character");
    return c - '0';
}

/// Rightmost 12 PAN digits excluding the check digit, left-zero-padded.
std::array<std::uint8_t, 12> pan_field(std::string_view pan)
{
    if (pan.size() < 2)
        throw PinBlockError(PinBlockErrorKind::NonDigit, "PAN too short");
    std::array<std::uint8_t, 12> field{};
    const auto body = pan.substr(0, pan.size() - 1);
    const auto take = std::min<std::size_t>(12, body.size());
    const auto tail = body.substr(body.size() - take);
    for (std::size_t i = 0; i < take; ++i)
        field[12 - take + i] = static_cast<std::uint8_t>(digit_value(tail[i]));
    for (char c : pan)
        digit_value(c);
    return field;
}

PinBlock pan_block(std::string_view pan)
{
    const auto field = pan_field(pan);
    PinBlock b{};
    // nibbles 0..3 are zero, nibbles 4..15 carry the PAN field
    for (std::size_t n = 0; n < 12; ++n) {
        const std::size_t nibble = n + 4;
        b[nibble / 2] |= static_cast<std::uint8_t>(field[n] << ((nibble % 2) ? 0 : 4));
    }
    return b;
}

int nibble_at(const PinBlock& b, std::size_t n) { return (n % 2) ? (b[n / 2] & 0x0F) : (b[n / 2] >> 4); }

} // namespace

std::uint16_t crc16(ByteView data) noexcept
{
    std::uint16_t crc = 0xFFFF;
    for (auto b : data)
        crc = crc_update(crc, b);
    return crc;
}

std::uint16_t crc16(std::string_view data) noexcept
{
    std::uint16_t crc = 0xFFFF;
    for (char c : data)
        crc = crc_update(crc, static_cast<std::uint8_t>(c));
    return crc;
}

bool is_known_message_type(std::uint8_t b) noexcept { return (b >= 0x01 && b <= 0x07) || b == 0x7F; }

std::string_view to_string(ResponseCode c) noexcept
{
    switch (c) {
    case ResponseCode::Approved: return "Approved";
    case ResponseCode::InvalidCard: return "InvalidCard";
    case ResponseCode::InvalidPin: return "InvalidPin";
    case ResponseCode::PinTriesExceeded: return "PinTriesExceeded";
    case ResponseCode::BiometricMismatch: return "BiometricMismatch";
    case ResponseCode::InsufficientFunds: return "InsufficientFunds";
    case ResponseCode::InvalidSession: return "InvalidSession";
    case ResponseCode::CardBlocked: return "CardBlocked";
    case ResponseCode::Malformed: return "Malformed";
    case ResponseCode::NotDispensable: return "NotDispensable";
    }
    return "Unknown";
}

std::optional<ResponseCode> response_code_from_byte(std::uint8_t b) noexcept
{
    if (b > 0x09)
        return std::nullopt;
    return static_cast<ResponseCode>(b);
}

std::optional<ResponseCode> response_code_from_string(std::string_view name) noexcept
{
    for (std::uint8_t b = 0; b <= 0x09; ++b) {
        const auto c = static_cast<ResponseCode>(b);
        if (to_string(c) == name)
            return c;
    }
    return std::nullopt;
}

Bytes encode_frame(const Frame& f)
{
    if (f.payload.size() > kMaxPayload)
        throw FrameError(FrameErrorKind::PayloadTooLarge, "payload exceeds 65535 bytes");
    Bytes out;
    out.reserve(kHeaderSize + f.payload.size() + 2);
    out.push_back(kMagic0);
    out.push_back(kMagic1);
    out.push_back(f.version);
    out.push_back(static_cast<std::uint8_t>(f.msg_type));
    out.push_back(static_cast<std::uint8_t>(f.payload.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(f.payload.size() & 0xFF));
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    const auto crc = crc16(ByteView(out));
    out.push_back(static_cast<std::uint8_t>(crc >> 8));
    out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
    return out;
}

std::optional<DecodedFrame> decode_frame(ByteView bytes)
{
    if (!bytes.empty() && bytes[0] != kMagic0)
        throw FrameError(FrameErrorKind::BadMagic, "bad magic");
    if (bytes.size() >= 2 && bytes[1] != kMagic1)
        throw FrameError(FrameErrorKind::BadMagic, "bad magic");
    if (bytes.size() < kHeaderSize)
        return std::nullopt;

    const std::size_t len = read_u16(bytes, 4);
    const std::size_t total = kHeaderSize + len + 2;
    if (bytes.size() < total)
        return std::nullopt;

    const auto expected = crc16(bytes.first(kHeaderSize + len));
    if (read_u16(bytes, kHeaderSize + len) != expected)
        throw FrameError(FrameErrorKind::CrcMismatch, "CRC mismatch");
    if (bytes[2] != kVersion)
        throw FrameError(FrameErrorKind::UnsupportedVersion, "unsupported version");
    if (!is_known_message_type(bytes[3]))
        throw FrameError(FrameErrorKind::UnknownType, "unknown message type");

    DecodedFrame out;
    out.frame.version = bytes[2];
    out.frame.msg_type = static_cast<MessageType>(bytes[3]);
    out.frame.payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + len));
    out.consumed = total;
    return out;
}

PinBlock encode_pin_block(std::string_view pin, std::string_view pan)
{
    if (pin.size() < 4 || pin.size() > 6)
        throw PinBlockError(PinBlockErrorKind::BadPinLength, "PIN must have 4 to 6 digits");
    PinBlock pin_part;
    pin_part.fill(0xFF);
    pin_part[0] = static_cast<std::uint8_t>(pin.size());
    for (std::size_t i = 0; i < pin.size(); ++i) {
        const std::size_t nibble = i + 2;
        auto& byte = pin_part[nibble / 2];
        const auto d = static_cast<std::uint8_t>(digit_value(pin[i]));
        byte = (nibble % 2) ? static_cast<std::uint8_t>((byte & 0xF0) | d)
                            : static_cast<std::uint8_t>((byte & 0x0F) | (d << 4));
    }
    const auto mask = pan_block(pan);
    PinBlock out;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>(pin_part[i] ^ mask[i]);
    return out;
}

std::string extract_pin(const PinBlock& block, std::string_view pan)
{
    const auto mask = pan_block(pan);
    PinBlock clear;
    for (std::size_t i = 0; i < clear.size(); ++i)
        clear[i] = static_cast<std::uint8_t>(block[i] ^ mask[i]);
    if (nibble_at(clear, 0) != 0)
        throw PinBlockError(PinBlockErrorKind::BadControlNibble, "PIN block control nibble is not 0");
    const int len = nibble_at(clear, 1);
    if (len < 4 || len > 6)
        throw PinBlockError(PinBlockErrorKind::BadPinLength, "PIN block length nibble out of range");
    std::string pin;
    for (int i = 0; i < len; ++i) {
        const int d = nibble_at(clear, static_cast<std::size_t>(i + 2));
        if (d > 9)
            throw PinBlockError(PinBlockErrorKind::NonDigit, "PIN block digit nibble out of range");
        pin.push_back(static_cast<char>('0' + d));
    }
    for (std::size_t n = static_cast<std::size_t>(len) + 2; n < 16; ++n)
        if (nibble_at(clear, n) != 0xF)
            throw PinBlockError(PinBlockErrorKind::BadFillNibble, "PIN block fill nibble is not F");
    return pin;
}

bool is_zero(const Token& t) noexcept
{
    return std::all_of(t.begin(), t.end(), [](std::uint8_t b) { return b == 0; });
}

std::string to_hex(ByteView bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

std::string token_hex(const Token& t) { return to_hex(t); }

std::optional<Token> token_from_hex(std::string_view hex)
{
    if (hex.size() != 16)
        return std::nullopt;
    auto value = [](char c) -> int {
        if (c >= '0' && c <= '9')
            return c - '0';
        if (c >= 'a' && c <= 'f')
            return c - 'a' + 10;
        if (c >= 'A' && c <= 'F')
            return c - 'A' + 10;
        return -1;
    };
    Token t{};
    for (std::size_t i = 0; i < t.size(); ++i) {
        const int hi = value(hex[2 * i]);
        const int lo = value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0)
            return std::nullopt;
        t[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return t;
}

} // namespace atm::wire
