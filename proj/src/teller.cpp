#include "atm/teller.hpp"

#include <cerrno>
#include <cstring>
#include <iostream>
#include <sstream>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <termios.h>
#include <unistd.h>

namespace atm::teller {

namespace {

template <class... F>
struct overloaded : F... {
    using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

bool all_digits(std::string_view s)
{
    return !s.empty() && s.find_first_not_of("0123456789") == std::string_view::npos;
}

std::string money(std::int64_t minor)
{
    return std::to_string(minor);
}

} // namespace

// ---- client ----

Client::Client(const server::HostPort& addr)
{
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto port = std::to_string(addr.port);
    if (::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
        throw ConnectionRefused("cannot resolve " + addr.host);
    fd_ = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
    const bool ok = fd_ >= 0 && ::connect(fd_, res->ai_addr, res->ai_addrlen) == 0;
    ::freeaddrinfo(res);
    if (!ok) {
        const std::string err = std::strerror(errno);
        if (fd_ >= 0)
            ::close(fd_);
        fd_ = -1;
        throw ConnectionRefused("cannot connect to " + addr.host + ":" + port + ": " + err);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Client::~Client()
{
    if (fd_ >= 0)
        ::close(fd_);
}

wire::Message Client::call(const wire::Message& request)
{
    const auto bytes = wire::encode_frame(wire::encode_message(request));
    if (sent_)
        sent_->insert(sent_->end(), bytes.begin(), bytes.end());
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            throw ConnectionLost("connection lost while sending");
        off += static_cast<std::size_t>(n);
    }

    std::uint8_t chunk[4096];
    while (true) {
        try {
            if (auto decoded = wire::decode_frame(buffer_)) {
                buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
                return wire::decode_message(decoded->frame);
            }
        } catch (const std::exception& e) {
            throw ConnectionLost(std::string("corrupt response: ") + e.what());
        }
        const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            throw ConnectionLost("connection closed by switch");
        buffer_.insert(buffer_.end(), chunk, chunk + n);
    }
}

// ---- script ----

std::vector<Action> parse_script(std::string_view text, const std::filesystem::path& base_dir)
{
    std::vector<Action> script;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    bool have_card = false;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos)
            raw.erase(hash);
        std::istringstream words(raw);
        std::vector<std::string> tok;
        for (std::string w; words >> w;)
            tok.push_back(w);
        if (tok.empty())
            continue;

        Action a;
        a.line = line_no;
        std::string verb = tok[0];
        for (auto& c : verb)
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        std::size_t i = 1;
        auto take_arg = [&](const char* what) -> std::string {
            if (i >= tok.size() || tok[i] == "EXPECT" || tok[i] == "BALANCE")
                throw ScriptError(line_no, verb + " needs " + what);
            return tok[i++];
        };
        auto take_amount = [&](const char* what) -> std::uint64_t {
            const auto s = take_arg(what);
            if (!all_digits(s) || s.size() > 18)
                throw ScriptError(line_no, "bad " + std::string(what) + " '" + s + "'");
            return std::stoull(s);
        };

        if (verb == "CARD") {
            a.kind = ActionKind::Card;
            a.text = take_arg("a card number");
            if (!all_digits(a.text) || a.text.size() > 19)
                throw ScriptError(line_no, "card number must be 1-19 digits");
            have_card = true;
        } else if (verb == "PIN") {
            a.kind = ActionKind::Pin;
            a.text = take_arg("PIN digits");
            if (!all_digits(a.text) || a.text.size() < 4 || a.text.size() > 6)
                throw ScriptError(line_no, "PIN must be 4-6 digits");
            if (!have_card)
                throw ScriptError(line_no, "PIN before CARD");
        } else if (verb == "FINGERPRINT") {
            a.kind = ActionKind::Fingerprint;
            std::filesystem::path p = take_arg("a minutiae file");
            if (p.is_relative() && !base_dir.empty())
                p = base_dir / p;
            try {
                a.sample = minutiae::load_template(p);
            } catch (const std::exception& e) {
                throw ScriptError(line_no, e.what());
            }
        } else if (verb == "WITHDRAW" || verb == "DEPOSIT") {
            a.kind = verb == "WITHDRAW" ? ActionKind::Withdraw : ActionKind::Deposit;
            a.amount = take_amount("amount");
        } else if (verb == "BALANCE") {
            a.kind = ActionKind::Balance;
        } else if (verb == "STATEMENT") {
            a.kind = ActionKind::Statement;
            if (i < tok.size() && tok[i] != "EXPECT" && tok[i] != "BALANCE")
                a.amount = take_amount("record count");
        } else if (verb == "END") {
            a.kind = ActionKind::End;
        } else {
            throw ScriptError(line_no, "unknown action '" + tok[0] + "'");
        }

        while (i < tok.size()) {
            const auto& key = tok[i++];
            if (i >= tok.size())
                throw ScriptError(line_no, key + " needs a value");
            const auto& value = tok[i++];
            if (key == "EXPECT") {
                a.expect = wire::response_code_from_string(value);
                if (!a.expect)
                    throw ScriptError(line_no, "unknown response code '" + value + "'");
            } else if (key == "BALANCE") {
                if (!all_digits(value) || value.size() > 18)
                    throw ScriptError(line_no, "bad balance '" + value + "'");
                a.expect_balance = std::stoll(value);
            } else {
                throw ScriptError(line_no, "unexpected '" + key + "'");
            }
        }
        if (a.kind == ActionKind::Card && (a.expect || a.expect_balance))
            throw ScriptError(line_no, "CARD sends nothing; put EXPECT on the PIN line");
        script.push_back(std::move(a));
    }
    return script;
}

// ---- terminal ----

std::optional<wire::Message> Terminal::perform(const Action& a)
{
    switch (a.kind) {
    case ActionKind::Card:
        pan_ = a.text;
        return std::nullopt;
    case ActionKind::Pin: {
        wire::AuthCardReq req{pan_, wire::encode_pin_block(a.text, pan_)};
        auto resp = client_.call(req);
        if (const auto* r = std::get_if<wire::AuthCardResp>(&resp); r && r->code == wire::ResponseCode::Approved)
            token_ = r->token;
        return resp;
    }
    case ActionKind::Fingerprint:
        return client_.call(wire::BioVerifyReq{current_token(), *a.sample});
    case ActionKind::Withdraw:
        return client_.call(wire::TxnReq{current_token(), wire::TxnType::Withdraw, a.amount});
    case ActionKind::Deposit:
        return client_.call(wire::TxnReq{current_token(), wire::TxnType::Deposit, a.amount});
    case ActionKind::Balance:
        return client_.call(wire::TxnReq{current_token(), wire::TxnType::Balance, 0});
    case ActionKind::Statement:
        return client_.call(wire::TxnReq{current_token(), wire::TxnType::Statement, a.amount});
    case ActionKind::End:
        return client_.call(wire::EndSession{current_token()});
    }
    return std::nullopt;
}

std::string Terminal::describe(const Action& a) const
{
    switch (a.kind) {
    case ActionKind::Card:
        return "CARD " + a.text;
    case ActionKind::Pin:
        return "AUTH_CARD pan=" + pan_ + " pin=****";
    case ActionKind::Fingerprint:
        return "BIO_VERIFY minutiae=" + std::to_string(a.sample->size());
    case ActionKind::Withdraw:
        return "TXN withdraw amount=" + std::to_string(a.amount);
    case ActionKind::Deposit:
        return "TXN deposit amount=" + std::to_string(a.amount);
    case ActionKind::Balance:
        return "TXN balance";
    case ActionKind::Statement:
        return "TXN statement n=" + std::to_string(a.amount);
    case ActionKind::End:
        return "END_SESSION";
    }
    return {};
}

wire::ResponseCode response_code(const wire::Message& m)
{
    return std::visit(overloaded{
                          [](const wire::AuthCardResp& r) { return r.code; },
                          [](const wire::BioVerifyResp& r) { return r.code; },
                          [](const wire::TxnResp& r) { return r.code; },
                          [](const wire::ErrMsg& r) { return r.code; },
                          [](const wire::EndSession&) { return wire::ResponseCode::Approved; },
                          [](const auto&) { return wire::ResponseCode::Malformed; },
                      },
                      m);
}

std::string describe_response(const wire::Message& m)
{
    std::string out(wire::to_string(response_code(m)));
    if (const auto* r = std::get_if<wire::AuthCardResp>(&m)) {
        out += " retries_remaining=" + std::to_string(r->retries_remaining);
    } else if (const auto* r = std::get_if<wire::BioVerifyResp>(&m)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, " score=%.3f", r->score_milli / 1000.0);
        out += buf;
    } else if (const auto* r = std::get_if<wire::TxnResp>(&m)) {
        out += " balance=" + money(static_cast<std::int64_t>(r->balance));
        for (const auto& rec : r->records)
            out += "\n    #" + std::to_string(rec.seq) + ' ' + (rec.kind == 1 ? "withdrawal" : "deposit") + ' '
                   + money(static_cast<std::int64_t>(rec.amount)) + " -> "
                   + money(static_cast<std::int64_t>(rec.resulting_balance));
    }
    return out;
}

int run_script(const server::HostPort& addr, const std::vector<Action>& script, std::ostream& transcript,
               wire::Bytes* sent)
{
    std::unique_ptr<Client> client;
    try {
        client = std::make_unique<Client>(addr);
    } catch (const ConnectionRefused& e) {
        transcript << "error: " << e.what() << '\n';
        return kExitRefused;
    }
    client->record_into(sent);
    Terminal terminal(*client);

    for (const auto& action : script) {
        transcript << "> " << terminal.describe(action) << '\n';
        std::optional<wire::Message> resp;
        try {
            resp = terminal.perform(action);
        } catch (const ConnectionLost& e) {
            transcript << "error: " << e.what() << '\n';
            return kExitConnectionLost;
        }
        if (!resp)
            continue;
        transcript << "< " << describe_response(*resp) << '\n';

        const auto code = response_code(*resp);
        if (action.expect && code != *action.expect) {
            transcript << "mismatch at line " << action.line << ": expected " << wire::to_string(*action.expect)
                       << ", got " << wire::to_string(code) << '\n';
            return kExitMismatch;
        }
        if (action.expect_balance) {
            const auto* txn = std::get_if<wire::TxnResp>(&*resp);
            if (!txn || static_cast<std::int64_t>(txn->balance) != *action.expect_balance) {
                transcript << "mismatch at line " << action.line << ": expected balance " << *action.expect_balance
                           << '\n';
                return kExitMismatch;
            }
        }
    }
    return kExitOk;
}

// ---- interactive ----

std::optional<std::string> read_pin_masked(std::istream& in, std::ostream& out)
{
    const bool tty = &in == &std::cin && ::isatty(STDIN_FILENO);
    termios saved{};
    if (tty) {
        ::tcgetattr(STDIN_FILENO, &saved);
        termios quiet = saved;
        quiet.c_lflag &= static_cast<tcflag_t>(~(ECHO | ICANON));
        quiet.c_cc[VMIN] = 1;
        quiet.c_cc[VTIME] = 0;
        ::tcsetattr(STDIN_FILENO, TCSAFLUSH, &quiet);
    }
    std::string pin;
    bool got_line = false;
    if (tty) {
        // Character at a time so each digit can be shown as '*'.
        for (char c; in.get(c);) {
            if (c == '\n' || c == '\r') {
                got_line = true;
                break;
            }
            if ((c == 0x7f || c == '\b') && !pin.empty()) {
                pin.pop_back();
                out << "\b \b" << std::flush;
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                pin.push_back(c);
                out << '*' << std::flush;
            }
        }
        ::tcsetattr(STDIN_FILENO, TCSAFLUSH, &saved);
        out << '\n';
    } else {
        got_line = static_cast<bool>(std::getline(in, pin));
    }
    if (!got_line)
        return std::nullopt;
    return pin;
}

namespace {

std::optional<std::string> prompt(std::istream& in, std::ostream& out, const std::string& text)
{
    out << text << std::flush;
    std::string line;
    if (!std::getline(in, line))
        return std::nullopt;
    const auto b = line.find_first_not_of(" \t\r");
    const auto e = line.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : line.substr(b, e - b + 1);
}

std::optional<std::uint64_t> parse_amount(const std::string& s)
{
    if (!all_digits(s) || s.size() > 18)
        return std::nullopt;
    return std::stoull(s);
}

} // namespace

int run_interactive(const server::HostPort& addr, std::istream& in, std::ostream& out, const PinReader& read_pin,
                    wire::Bytes* sent)
{
    std::unique_ptr<Client> client;
    try {
        client = std::make_unique<Client>(addr);
    } catch (const ConnectionRefused& e) {
        out << "error: " << e.what() << '\n';
        return kExitRefused;
    }
    client->record_into(sent);
    Terminal terminal(*client);

    auto send = [&](const Action& a) { return *terminal.perform(a); };
    auto end_session = [&]() {
        Action end;
        end.kind = ActionKind::End;
        send(end);
        out << "Thank you. Please take your card.\n";
        return kExitOk;
    };

    try {
        out << "==== ATM ====\n";
        // Login: card then PIN, re-prompting as the switch directs.
        bool authed = false;
        while (!authed) {
            const auto pan = prompt(in, out, "Insert card (card number): ");
            if (!pan)
                return end_session();
            if (!all_digits(*pan) || pan->size() > 19) {
                out << "Invalid card number.\n";
                continue;
            }
            Action card;
            card.kind = ActionKind::Card;
            card.text = *pan;
            terminal.perform(card);

            while (true) {
                out << "Enter PIN: " << std::flush;
                const auto pin = read_pin(in, out);
                if (!pin)
                    return end_session();
                if (!all_digits(*pin) || pin->size() < 4 || pin->size() > 6) {
                    out << "Invalid PIN. Enter 4 to 6 digits.\n";
                    continue;
                }
                Action a;
                a.kind = ActionKind::Pin;
                a.text = *pin;
                const auto resp = std::get<wire::AuthCardResp>(send(a));
                if (resp.code == wire::ResponseCode::Approved) {
                    authed = true;
                    break;
                }
                if (resp.code == wire::ResponseCode::InvalidPin) {
                    out << "Invalid PIN. " << int(resp.retries_remaining) << " tries remaining.\n";
                    continue;
                }
                if (resp.code == wire::ResponseCode::InvalidCard) {
                    out << "Invalid card number.\n";
                    break;
                }
                out << (resp.code == wire::ResponseCode::CardBlocked ? "Card blocked. Contact your bank.\n"
                                                                      : "Too many wrong PINs. Card blocked.\n");
                return kExitOk;
            }
        }

        // Fingerprint.
        while (true) {
            const auto path = prompt(in, out, "Place finger on reader (minutiae file): ");
            if (!path)
                return end_session();
            Action a;
            a.kind = ActionKind::Fingerprint;
            try {
                a.sample = minutiae::load_template(*path);
            } catch (const std::exception& e) {
                out << "Could not read fingerprint: " << e.what() << '\n';
                continue;
            }
            const auto resp = std::get<wire::BioVerifyResp>(send(a));
            if (resp.code == wire::ResponseCode::Approved)
                break;
            // The switch logs the customer off on a mismatch.
            out << "Access denied. Fingerprint does not match.\n";
            return kExitOk;
        }

        // Menu.
        while (true) {
            out << "\n1) Withdraw  2) Deposit  3) Balance  4) Statement  5) Exit\n";
            const auto choice = prompt(in, out, "Select: ");
            if (!choice || *choice == "5")
                return end_session();
            Action a;
            if (*choice == "1" || *choice == "2") {
                const auto amt = prompt(in, out, "Amount: ");
                if (!amt)
                    return end_session();
                const auto value = parse_amount(*amt);
                if (!value) {
                    out << "Enter a whole amount.\n";
                    continue;
                }
                a.kind = *choice == "1" ? ActionKind::Withdraw : ActionKind::Deposit;
                a.amount = *value;
            } else if (*choice == "3") {
                a.kind = ActionKind::Balance;
            } else if (*choice == "4") {
                const auto n = prompt(in, out, "How many records [10]: ");
                if (!n)
                    return end_session();
                const auto value = n->empty() ? std::optional<std::uint64_t>(0) : parse_amount(*n);
                if (!value) {
                    out << "Enter a number.\n";
                    continue;
                }
                a.kind = ActionKind::Statement;
                a.amount = *value;
            } else {
                out << "Unknown option.\n";
                continue;
            }
            const auto resp = std::get<wire::TxnResp>(send(a));
            switch (resp.code) {
            case wire::ResponseCode::Approved:
                if (a.kind == ActionKind::Statement) {
                    out << "Statement:\n";
                    for (const auto& r : resp.records)
                        out << "  #" << r.seq << ' ' << (r.kind == 1 ? "withdrawal" : "deposit") << ' ' << r.amount
                            << " -> " << r.resulting_balance << '\n';
                }
                out << "Balance: " << resp.balance << '\n';
                break;
            case wire::ResponseCode::InsufficientFunds:
                out << "Insufficient funds. Balance: " << resp.balance << '\n';
                break;
            case wire::ResponseCode::NotDispensable:
                out << "Amount cannot be dispensed in available notes.\n";
                break;
            case wire::ResponseCode::InvalidSession:
                out << "Session expired.\n";
                return kExitOk;
            default:
                out << "Declined: " << wire::to_string(resp.code) << '\n';
                break;
            }
        }
    } catch (const ConnectionLost& e) {
        out << "Connection to the bank lost: " << e.what() << '\n';
        return kExitConnectionLost;
    }
}

} // namespace atm::teller
