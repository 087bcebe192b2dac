#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "atm/minutiae.hpp"

namespace atm::wire {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, unreflected, xorout 0.
std::uint16_t crc16(ByteView data) noexcept;
std::uint16_t crc16(std::string_view data) noexcept;

inline constexpr std::uint8_t kMagic0 = 0xA7;
inline constexpr std::uint8_t kMagic1 = 0x4D;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 6;
inline constexpr std::size_t kMaxPayload = 65535;

enum class MessageType : std::uint8_t {
    AuthCardReq = 0x01,
    AuthCardResp = 0x02,
    BioVerifyReq = 0x03,
    BioVerifyResp = 0x04,
    TxnReq = 0x05,
    TxnResp = 0x06,
    EndSession = 0x07,
    Err = 0x7F,
};

bool is_known_message_type(std::uint8_t b) noexcept;

enum class ResponseCode : std::uint8_t {
    Approved = 0x00,
    InvalidCard = 0x01,
    InvalidPin = 0x02,
    PinTriesExceeded = 0x03,
    BiometricMismatch = 0x04,
    InsufficientFunds = 0x05,
    InvalidSession = 0x06,
    CardBlocked = 0x07,
    Malformed = 0x08,
    NotDispensable = 0x09,
};

std::string_view to_string(ResponseCode c) noexcept;
std::optional<ResponseCode> response_code_from_string(std::string_view name) noexcept;
std::optional<ResponseCode> response_code_from_byte(std::uint8_t b) noexcept;

struct Frame {
    std::uint8_t version = kVersion;
    MessageType msg_type = MessageType::Err;
    Bytes payload;

    friend bool operator==(const Frame&, const Frame&) = default;
};

enum class FrameErrorKind { BadMagic, UnsupportedVersion, CrcMismatch, UnknownType, PayloadTooLarge };

class FrameError : public std::runtime_error {
public:
    FrameError(FrameErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    FrameErrorKind kind() const noexcept { return kind_; }

private:
    FrameErrorKind kind_;
};

Bytes encode_frame(const Frame& f);

struct DecodedFrame {
    Frame frame;
    std::size_t consumed = 0;
};

/// Decodes one frame from the front of `bytes`. Returns nullopt when more
/// bytes are needed; throws FrameError on corruption.
std::optional<DecodedFrame> decode_frame(ByteView bytes);

// PIN block, ISO 9564 format 0 layout.

using PinBlock = std::array<std::uint8_t, 8>;

enum class PinBlockErrorKind { BadPinLength, NonDigit, BadControlNibble, BadFillNibble };

class PinBlockError : public std::runtime_error {
public:
    PinBlockError(PinBlockErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    PinBlockErrorKind kind() const noexcept { return kind_; }

private:
    PinBlockErrorKind kind_;
};

PinBlock encode_pin_block(std::string_view pin, std::string_view pan);
std::string extract_pin(const PinBlock& block, std::string_view pan);

// Payload-level errors (a well-framed message with a bad body).
class MalformedPayload : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Bytes encode_minutiae(const minutiae::FingerprintTemplate& t);
minutiae::FingerprintTemplate decode_minutiae(ByteView bytes);

using Token = std::array<std::uint8_t, 8>;

bool is_zero(const Token& t) noexcept;
std::string to_hex(ByteView bytes);
std::string token_hex(const Token& t);
std::optional<Token> token_from_hex(std::string_view hex);

enum class TxnType : std::uint8_t { Withdraw = 1, Deposit = 2, Balance = 3, Statement = 4 };

struct AuthCardReq {
    std::string pan;
    PinBlock pin_block{};
    friend bool operator==(const AuthCardReq&, const AuthCardReq&) = default;
};

struct AuthCardResp {
    ResponseCode code = ResponseCode::Approved;
    Token token{};
    std::uint8_t retries_remaining = 0;
    friend bool operator==(const AuthCardResp&, const AuthCardResp&) = default;
};

struct BioVerifyReq {
    Token token{};
    minutiae::FingerprintTemplate sample;
    friend bool operator==(const BioVerifyReq&, const BioVerifyReq&) = default;
};

struct BioVerifyResp {
    ResponseCode code = ResponseCode::Approved;
    std::uint16_t score_milli = 0;
    friend bool operator==(const BioVerifyResp&, const BioVerifyResp&) = default;
};

struct TxnReq {
    Token token{};
    TxnType type = TxnType::Balance;
    std::uint64_t amount = 0;
    friend bool operator==(const TxnReq&, const TxnReq&) = default;
};

/// Record kind byte: 1 = withdrawal, 2 = deposit.
struct WireRecord {
    std::uint32_t seq = 0;
    std::uint8_t kind = 0;
    std::uint64_t amount = 0;
    std::uint64_t resulting_balance = 0;
    std::uint64_t timestamp = 0;
    friend bool operator==(const WireRecord&, const WireRecord&) = default;
};

struct TxnResp {
    ResponseCode code = ResponseCode::Approved;
    std::uint64_t balance = 0;
    std::vector<WireRecord> records;
    friend bool operator==(const TxnResp&, const TxnResp&) = default;
};

struct EndSession {
    Token token{};
    friend bool operator==(const EndSession&, const EndSession&) = default;
};

struct ErrMsg {
    ResponseCode code = ResponseCode::Malformed;
    friend bool operator==(const ErrMsg&, const ErrMsg&) = default;
};

using Message = std::variant<AuthCardReq, AuthCardResp, BioVerifyReq, BioVerifyResp, TxnReq, TxnResp, EndSession, ErrMsg>;

MessageType message_type(const Message& m) noexcept;
Frame encode_message(const Message& m);
/// Throws MalformedPayload.
Message decode_message(const Frame& f);

} // namespace atm::wire
