#include "atm/switch.hpp"

#include <chrono>

#include <openssl/rand.h>

namespace atm::server {

AuditLog::AuditLog(const std::filesystem::path& file) : file_(file, std::ios::app)
{
    if (!file_)
        throw std::runtime_error("cannot open audit log " + file.string());
}

void AuditLog::record(const AuditEvent& e)
{
    std::lock_guard lock(mu_);
    events_.push_back(e);
    if (file_.is_open()) {
        file_ << e.timestamp << '|' << wire::token_hex(e.token) << '|' << to_string(e.kind) << '|' << e.detail << '\n';
        file_.flush();
    }
}

std::vector<AuditEvent> AuditLog::events() const
{
    std::lock_guard lock(mu_);
    return events_;
}

wire::Token random_token()
{
    wire::Token t{};
    do {
        if (RAND_bytes(t.data(), static_cast<int>(t.size())) != 1)
            throw std::runtime_error("RAND_bytes failed");
    } while (wire::is_zero(t));
    return t;
}

Switch::Switch(vault::Vault& vault, SwitchConfig config, TokenSource tokens, Clock clock, std::shared_ptr<AuditLog> audit)
    : vault_(vault), config_(std::move(config)), tokens_(std::move(tokens)), clock_(std::move(clock)),
      audit_(audit ? std::move(audit) : std::make_shared<AuditLog>())
{
    config_.validate();
    if (!tokens_)
        tokens_ = random_token;
}

std::int64_t Switch::now() const
{
    if (clock_)
        return clock_();
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

wire::Token Switch::fresh_token() const
{
    while (true) {
        const auto t = tokens_();
        if (wire::is_zero(t))
            continue;
        std::lock_guard lock(table_mu_);
        if (!table_.count(t))
            return t;
    }
}

std::shared_ptr<Switch::Entry> Switch::find(const wire::Token& token) const
{
    std::lock_guard lock(table_mu_);
    auto it = table_.find(token);
    return it == table_.end() ? nullptr : it->second;
}

void Switch::record(const std::vector<AuditEvent>& events)
{
    for (const auto& e : events)
        audit_->record(e);
}

wire::Message Switch::process(TerminalSession& terminal, const wire::Message& request)
{
    if (std::holds_alternative<wire::AuthCardReq>(request) && !terminal.token) {
        Session fresh;
        if (terminal.terminated)
            fresh.state = SessionState::Terminated;
        const TransitionInputs in{now(), fresh_token()};
        auto result = transition(fresh, request, vault_, config_, in);
        if (result.next.state == SessionState::AwaitBiometric) {
            auto entry = std::make_shared<Entry>();
            entry->session = result.next;
            {
                std::lock_guard lock(table_mu_);
                table_.emplace(result.next.token, std::move(entry));
            }
            terminal.token = result.next.token;
        } else if (result.next.state == SessionState::Terminated) {
            terminal.terminated = true;
        }
        record(result.audits);
        return std::move(result.response);
    }

    if (!terminal.token) {
        // Pre-card terminal: only END_SESSION means anything.
        if (const auto* end = std::get_if<wire::EndSession>(&request); end && !terminal.terminated) {
            terminal.terminated = true;
            record({{now(), end->token, AuditKind::End, "end before card"}});
            return wire::EndSession{end->token};
        }
        return rejection(request, std::holds_alternative<wire::AuthCardResp>(request)
                                          || std::holds_alternative<wire::BioVerifyResp>(request)
                                          || std::holds_alternative<wire::TxnResp>(request)
                                          || std::holds_alternative<wire::ErrMsg>(request)
                                      ? wire::ResponseCode::Malformed
                                      : wire::ResponseCode::InvalidSession);
    }

    auto entry = find(*terminal.token);
    if (!entry)
        return rejection(request, wire::ResponseCode::InvalidSession);

    std::lock_guard lock(entry->mu);
    const TransitionInputs in{now(), {}};
    auto result = transition(entry->session, request, vault_, config_, in);
    entry->session = result.next;
    if (result.next.state == SessionState::Terminated)
        terminal.terminated = true;
    record(result.audits);
    return std::move(result.response);
}

Switch::TokenStatus Switch::status(const wire::Token& token) const
{
    auto entry = find(token);
    if (!entry)
        return TokenStatus::Unknown;
    std::lock_guard lock(entry->mu);
    return entry->session.state == SessionState::Terminated ? TokenStatus::Terminated : TokenStatus::Live;
}

std::optional<Session> Switch::session(const wire::Token& token) const
{
    auto entry = find(token);
    if (!entry)
        return std::nullopt;
    std::lock_guard lock(entry->mu);
    return entry->session;
}

std::size_t Switch::expire_idle()
{
    std::vector<std::pair<wire::Token, std::shared_ptr<Entry>>> entries;
    {
        std::lock_guard lock(table_mu_);
        entries.assign(table_.begin(), table_.end());
    }
    const auto t = now();
    const auto timeout_ms = static_cast<std::int64_t>(config_.session_timeout_secs) * 1000;
    std::size_t expired = 0;
    std::vector<wire::Token> forget;
    for (auto& [token, entry] : entries) {
        std::lock_guard lock(entry->mu);
        auto& s = entry->session;
        if (s.state != SessionState::Terminated && t - s.last_activity > timeout_ms) {
            s.state = SessionState::Terminated;
            audit_->record({t, token, AuditKind::Timeout, "idle"});
            ++expired;
        } else if (s.state == SessionState::Terminated && t - s.last_activity > 10 * timeout_ms) {
            forget.push_back(token);
        }
    }
    if (!forget.empty()) {
        std::lock_guard lock(table_mu_);
        for (const auto& token : forget)
            table_.erase(token);
    }
    return expired;
}

} // namespace atm::server
