#include "atm/session.hpp"

#include <limits>

namespace atm::server {

using wire::ResponseCode;

std::string_view to_string(SessionState s) noexcept
{
    switch (s) {
    case SessionState::AwaitCard: return "AwaitCard";
    case SessionState::AwaitBiometric: return "AwaitBiometric";
    case SessionState::Menu: return "Menu";
    case SessionState::Terminated: return "Terminated";
    }
    return "Unknown";
}

std::string_view to_string(AuditKind k) noexcept
{
    switch (k) {
    case AuditKind::AuthOk: return "AuthOk";
    case AuditKind::PinFail: return "PinFail";
    case AuditKind::BioFail: return "BioFail";
    case AuditKind::TxnOk: return "TxnOk";
    case AuditKind::TxnFail: return "TxnFail";
    case AuditKind::Timeout: return "Timeout";
    case AuditKind::End: return "End";
    }
    return "Unknown";
}

wire::Message rejection(const wire::Message& request, ResponseCode code)
{
    switch (request.index()) {
    case 0: return wire::AuthCardResp{code, {}, 0};
    case 2: return wire::BioVerifyResp{code, 0};
    case 4: return wire::TxnResp{code, 0, {}};
    default: return wire::ErrMsg{code};
    }
}

std::uint16_t score_milli(int matched, std::size_t probe_size, std::size_t gallery_size) noexcept
{
    const auto total = probe_size + gallery_size;
    if (total == 0)
        return 0;
    return static_cast<std::uint16_t>((2000ULL * static_cast<unsigned>(matched)) / total);
}

namespace {

wire::WireRecord to_wire(const vault::TransactionRecord& r)
{
    wire::WireRecord w;
    w.seq = static_cast<std::uint32_t>(r.seq);
    w.kind = r.kind == vault::TxnKind::Withdrawal ? 1 : 2;
    w.amount = static_cast<std::uint64_t>(r.amount);
    w.resulting_balance = static_cast<std::uint64_t>(r.resulting_balance);
    w.timestamp = static_cast<std::uint64_t>(r.timestamp);
    return w;
}

class Step {
public:
    Step(const Session& s, const wire::Message& req, const TransitionInputs& in) : req_(req), in_(in) { out_.next = s; }

    TransitionResult unchanged(ResponseCode code)
    {
        out_.response = rejection(req_, code);
        return std::move(out_);
    }

    Step& audit(AuditKind kind, std::string detail)
    {
        out_.audits.push_back({in_.now_ms, out_.next.token, kind, std::move(detail)});
        return *this;
    }

    Session& next() { return out_.next; }

    TransitionResult reply(wire::Message m)
    {
        out_.response = std::move(m);
        return std::move(out_);
    }

private:
    const wire::Message& req_;
    const TransitionInputs& in_;
    TransitionResult out_;
};

TransitionResult on_auth(Step step, const wire::AuthCardReq& req, vault::Vault& vault, const SwitchConfig& cfg,
                         const TransitionInputs& in)
{
    const auto card = vault.card(req.pan);
    if (!card) {
        step.audit(AuditKind::PinFail, "unknown card");
        return step.reply(wire::AuthCardResp{ResponseCode::InvalidCard, {}, 0});
    }
    if (card->status == vault::CardStatus::Blocked) {
        step.next().state = SessionState::Terminated;
        step.audit(AuditKind::PinFail, "card blocked");
        return step.reply(wire::AuthCardResp{ResponseCode::CardBlocked, {}, 0});
    }

    std::string pin;
    try {
        pin = wire::extract_pin(req.pin_block, req.pan);
    } catch (const wire::PinBlockError&) {
        return step.unchanged(ResponseCode::Malformed);
    }

    const auto check = vault.verify_pin(req.pan, pin, cfg.pin_max_tries);
    switch (check.outcome) {
    case vault::PinOutcome::Ok: {
        auto& s = step.next();
        s.state = SessionState::AwaitBiometric;
        s.pan = req.pan;
        s.token = in.fresh_token;
        s.created_at = in.now_ms;
        s.last_activity = in.now_ms;
        s.bio_failures = 0;
        step.audit(AuditKind::AuthOk, "card");
        return step.reply(
            wire::AuthCardResp{ResponseCode::Approved, in.fresh_token, static_cast<std::uint8_t>(cfg.pin_max_tries)});
    }
    case vault::PinOutcome::WrongPin:
        step.audit(AuditKind::PinFail, "wrong pin");
        return step.reply(
            wire::AuthCardResp{ResponseCode::InvalidPin, {}, static_cast<std::uint8_t>(check.remaining)});
    case vault::PinOutcome::Blocked:
        step.next().state = SessionState::Terminated;
        step.audit(AuditKind::PinFail, check.just_blocked ? "pin tries exceeded" : "card blocked");
        return step.reply(wire::AuthCardResp{
            check.just_blocked ? ResponseCode::PinTriesExceeded : ResponseCode::CardBlocked, {}, 0});
    case vault::PinOutcome::UnknownCard:
        break;
    }
    step.audit(AuditKind::PinFail, "unknown card");
    return step.reply(wire::AuthCardResp{ResponseCode::InvalidCard, {}, 0});
}

TransitionResult on_bio(Step step, const wire::BioVerifyReq& req, vault::Vault& vault, const SwitchConfig& cfg,
                        const TransitionInputs& in)
{
    auto& s = step.next();
    const auto enrolled = vault.enrolled_template(s.pan);
    if (!enrolled)
        return step.unchanged(ResponseCode::InvalidCard);

    const auto result = minutiae::match_templates(req.sample, *enrolled, cfg.match);
    const auto milli = score_milli(result.matched_count, req.sample.size(), enrolled->size());
    s.last_activity = in.now_ms;
    if (minutiae::decide(result, cfg.match_threshold)) {
        s.state = SessionState::Menu;
        step.audit(AuditKind::AuthOk, "biometric score_milli=" + std::to_string(milli));
        return step.reply(wire::BioVerifyResp{ResponseCode::Approved, milli});
    }
    ++s.bio_failures;
    if (s.bio_failures >= cfg.bio_max_tries)
        s.state = SessionState::Terminated;
    step.audit(AuditKind::BioFail, "score_milli=" + std::to_string(milli));
    return step.reply(wire::BioVerifyResp{ResponseCode::BiometricMismatch, milli});
}

TransitionResult on_txn(Step step, const wire::TxnReq& req, vault::Vault& vault, const SwitchConfig& cfg,
                        const TransitionInputs& in)
{
    auto& s = step.next();
    const auto card = vault.card(s.pan);
    if (!card)
        return step.unchanged(ResponseCode::InvalidCard);
    const auto account = card->account_id;
    s.last_activity = in.now_ms;

    auto fail = [&](ResponseCode code, const char* what) {
        step.audit(AuditKind::TxnFail, what);
        return step.reply(wire::TxnResp{code, static_cast<std::uint64_t>(vault.balance(account)), {}});
    };

    const bool moves_money = req.type == wire::TxnType::Withdraw || req.type == wire::TxnType::Deposit;
    if (moves_money
        && (req.amount == 0 || req.amount > static_cast<std::uint64_t>(std::numeric_limits<vault::Money>::max() / 2)))
        return fail(ResponseCode::Malformed, "bad amount");

    try {
        wire::TxnResp resp;
        resp.code = ResponseCode::Approved;
        std::string detail;
        switch (req.type) {
        case wire::TxnType::Withdraw: {
            const auto rec = vault.withdraw(account, static_cast<vault::Money>(req.amount), cfg.dispense_multiple);
            resp.records.push_back(to_wire(rec));
            detail = "withdraw " + std::to_string(req.amount);
            break;
        }
        case wire::TxnType::Deposit: {
            const auto rec = vault.deposit(account, static_cast<vault::Money>(req.amount));
            resp.records.push_back(to_wire(rec));
            detail = "deposit " + std::to_string(req.amount);
            break;
        }
        case wire::TxnType::Balance:
            detail = "balance";
            break;
        case wire::TxnType::Statement: {
            const int depth = req.amount == 0 ? vault::kDefaultStatementDepth
                                              : static_cast<int>(std::min<std::uint64_t>(req.amount, 255));
            for (const auto& r : vault.statement(account, depth))
                resp.records.push_back(to_wire(r));
            detail = "statement";
            break;
        }
        }
        resp.balance = static_cast<std::uint64_t>(vault.balance(account));
        step.audit(AuditKind::TxnOk, detail);
        return step.reply(std::move(resp));
    } catch (const vault::VaultError& e) {
        switch (e.kind()) {
        case vault::VaultErrorKind::InsufficientFunds: return fail(ResponseCode::InsufficientFunds, "insufficient funds");
        case vault::VaultErrorKind::NotDispensable: return fail(ResponseCode::NotDispensable, "not dispensable");
        default: return fail(ResponseCode::Malformed, e.what());
        }
    }
}

bool has_token(SessionState s) { return s == SessionState::AwaitBiometric || s == SessionState::Menu; }

const wire::Token* request_token(const wire::Message& m)
{
    if (const auto* b = std::get_if<wire::BioVerifyReq>(&m))
        return &b->token;
    if (const auto* t = std::get_if<wire::TxnReq>(&m))
        return &t->token;
    if (const auto* e = std::get_if<wire::EndSession>(&m))
        return &e->token;
    return nullptr;
}

} // namespace

TransitionResult transition(const Session& session, const wire::Message& request, vault::Vault& vault,
                            const SwitchConfig& config, const TransitionInputs& inputs)
{
    Step step(session, request, inputs);
    const auto state = session.state;

    if (state == SessionState::Terminated)
        return step.unchanged(ResponseCode::InvalidSession);

    const auto* token = request_token(request);
    if (has_token(state) && token && *token != session.token)
        return step.unchanged(ResponseCode::InvalidSession);

    if (has_token(state)
        && inputs.now_ms - session.last_activity > static_cast<std::int64_t>(config.session_timeout_secs) * 1000) {
        step.next().state = SessionState::Terminated;
        step.audit(AuditKind::Timeout, "idle");
        return step.reply(rejection(request, ResponseCode::InvalidSession));
    }

    if (const auto* end = std::get_if<wire::EndSession>(&request)) {
        step.next().state = SessionState::Terminated;
        step.audit(AuditKind::End, "end session");
        return step.reply(wire::EndSession{end->token});
    }

    if (const auto* auth = std::get_if<wire::AuthCardReq>(&request); auth && state == SessionState::AwaitCard)
        return on_auth(std::move(step), *auth, vault, config, inputs);
    if (const auto* bio = std::get_if<wire::BioVerifyReq>(&request); bio && state == SessionState::AwaitBiometric)
        return on_bio(std::move(step), *bio, vault, config, inputs);
    if (const auto* txn = std::get_if<wire::TxnReq>(&request); txn && state == SessionState::Menu)
        return on_txn(std::move(step), *txn, vault, config, inputs);

    const bool is_request = std::holds_alternative<wire::AuthCardReq>(request)
                            || std::holds_alternative<wire::BioVerifyReq>(request)
                            || std::holds_alternative<wire::TxnReq>(request);
    return step.unchanged(is_request ? ResponseCode::InvalidSession : ResponseCode::Malformed);
}

} // namespace atm::server
