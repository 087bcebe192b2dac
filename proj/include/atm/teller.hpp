#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atm/minutiae.hpp"
#include "atm/switch_config.hpp"
#include "atm/wire.hpp"

namespace atm::teller {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRefused = 2;
inline constexpr int kExitParse = 3;
inline constexpr int kExitMismatch = 4;
inline constexpr int kExitConnectionLost = 5;

class ConnectionRefused : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class ConnectionLost : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Blocking request/response client for the binary protocol.
class Client {
public:
    explicit Client(const server::HostPort& addr);
    ~Client();
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    wire::Message call(const wire::Message& request);

    /// Every byte written to the socket is appended here when set.
    void record_into(wire::Bytes* sink) { sent_ = sink; }

private:
    int fd_ = -1;
    wire::Bytes buffer_;
    wire::Bytes* sent_ = nullptr;
};

enum class ActionKind { Card, Pin, Fingerprint, Withdraw, Deposit, Balance, Statement, End };

struct Action {
    ActionKind kind = ActionKind::End;
    std::string text;                                  // PAN or PIN digits
    std::uint64_t amount = 0;                          // WITHDRAW/DEPOSIT amount, STATEMENT depth
    std::optional<minutiae::FingerprintTemplate> sample;
    std::optional<wire::ResponseCode> expect;
    std::optional<std::int64_t> expect_balance;
    int line = 0;
};

class ScriptError : public std::runtime_error {
public:
    ScriptError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// One action per line: `ACTION [arg] [EXPECT code] [BALANCE n]`, `#` comments.
/// FINGERPRINT paths resolve against `base_dir` and are loaded eagerly.
std::vector<Action> parse_script(std::string_view text, const std::filesystem::path& base_dir = {});

/// Holds what the terminal remembers between actions: the card and the token.
class Terminal {
public:
    explicit Terminal(Client& client) : client_(client) {}

    /// Sends the action's request (CARD sends nothing) and returns the
    /// response, or nullopt for CARD.
    std::optional<wire::Message> perform(const Action& action);

    /// Transcript line for a request; never includes the PIN.
    std::string describe(const Action& action) const;

    const std::optional<wire::Token>& token() const { return token_; }

private:
    wire::Token current_token() const { return token_.value_or(wire::Token{}); }

    Client& client_;
    std::string pan_;
    std::optional<wire::Token> token_;
};

wire::ResponseCode response_code(const wire::Message& m);
std::string describe_response(const wire::Message& m);

int run_script(const server::HostPort& addr, const std::vector<Action>& script, std::ostream& transcript,
               wire::Bytes* sent = nullptr);

/// Reads a PIN without echo when `in` is the terminal.
using PinReader = std::function<std::optional<std::string>(std::istream& in, std::ostream& out)>;
std::optional<std::string> read_pin_masked(std::istream& in, std::ostream& out);

int run_interactive(const server::HostPort& addr, std::istream& in, std::ostream& out,
                    const PinReader& read_pin = read_pin_masked, wire::Bytes* sent = nullptr);

} // namespace atm::teller
