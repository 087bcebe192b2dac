#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "atm/session.hpp"

namespace atm::server {

/// Totally ordered audit trail, optionally mirrored to a file.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::filesystem::path& file);

    void record(const AuditEvent& e);
    std::vector<AuditEvent> events() const;

private:
    mutable std::mutex mu_;
    std::vector<AuditEvent> events_;
    std::ofstream file_;
};

/// What a connection (or one HTTP call) knows about its session.
struct TerminalSession {
    std::optional<wire::Token> token;
    bool terminated = false;
};

using TokenSource = std::function<wire::Token()>;
using Clock = std::function<std::int64_t()>;

/// Session table plus the glue between requests and `transition`.
/// Thread-safe; requests on one session are serialized.
class Switch {
public:
    Switch(vault::Vault& vault, SwitchConfig config, TokenSource tokens = {}, Clock clock = {},
           std::shared_ptr<AuditLog> audit = {});

    wire::Message process(TerminalSession& terminal, const wire::Message& request);

    enum class TokenStatus { Unknown, Live, Terminated };
    TokenStatus status(const wire::Token& token) const;

    /// Terminates sessions idle past the timeout and forgets long-dead ones.
    /// Returns the number of sessions that timed out.
    std::size_t expire_idle();

    std::optional<Session> session(const wire::Token& token) const;
    AuditLog& audit() { return *audit_; }
    const SwitchConfig& config() const { return config_; }
    vault::Vault& vault() { return vault_; }
    std::int64_t now() const;

private:
    struct Entry {
        std::mutex mu;
        Session session;
    };

    wire::Token fresh_token() const;
    std::shared_ptr<Entry> find(const wire::Token& token) const;
    void record(const std::vector<AuditEvent>& events);

    vault::Vault& vault_;
    SwitchConfig config_;
    TokenSource tokens_;
    Clock clock_;
    std::shared_ptr<AuditLog> audit_;
    mutable std::mutex table_mu_;
    std::map<wire::Token, std::shared_ptr<Entry>> table_;
};

/// OS randomness, nonzero.
wire::Token random_token();

} // namespace atm::server
