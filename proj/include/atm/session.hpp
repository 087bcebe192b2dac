#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "atm/switch_config.hpp"
#include "atm/vault.hpp"
#include "atm/wire.hpp"

namespace atm::server {

enum class SessionState { AwaitCard, AwaitBiometric, Menu, Terminated };

std::string_view to_string(SessionState s) noexcept;

struct Session {
    SessionState state = SessionState::AwaitCard;
    std::string pan;
    wire::Token token{};
    std::int64_t created_at = 0;    // unix ms
    std::int64_t last_activity = 0; // unix ms
    int bio_failures = 0;

    friend bool operator==(const Session&, const Session&) = default;
};

enum class AuditKind { AuthOk, PinFail, BioFail, TxnOk, TxnFail, Timeout, End };

std::string_view to_string(AuditKind k) noexcept;

struct AuditEvent {
    std::int64_t timestamp = 0;
    wire::Token token{};
    AuditKind kind = AuditKind::End;
    std::string detail;

    friend bool operator==(const AuditEvent&, const AuditEvent&) = default;
};

struct TransitionInputs {
    std::int64_t now_ms = 0;
    /// Issued if this request approves the card; must be nonzero.
    wire::Token fresh_token{};
};

struct TransitionResult {
    Session next;
    wire::Message response;
    std::vector<AuditEvent> audits;
};

/// One step of the terminal session:
///
///   AwaitCard      x AUTH_CARD_REQ  -> AwaitBiometric (Approved) | AwaitCard (InvalidCard, InvalidPin)
///                                      | Terminated (CardBlocked, PinTriesExceeded)
///   AwaitBiometric x BIO_VERIFY_REQ -> Menu (Approved) | Terminated after bio_max_tries mismatches
///   Menu           x TXN_REQ        -> Menu
///   any            x END_SESSION    -> Terminated
///
/// Anything else is answered with InvalidSession or Malformed and leaves the
/// session untouched. Sessions idle past the timeout terminate on their next
/// request. The only side effects are the vault's own journaled mutations.
TransitionResult transition(const Session& session, const wire::Message& request, vault::Vault& vault,
                            const SwitchConfig& config, const TransitionInputs& inputs);

/// Response of the type matching `request` carrying `code`.
wire::Message rejection(const wire::Message& request, wire::ResponseCode code);

/// floor(1000 * 2M / (|probe| + |gallery|)) without floating point.
std::uint16_t score_milli(int matched, std::size_t probe_size, std::size_t gallery_size) noexcept;

} // namespace atm::server
