#include "doctest.h"

#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include "httplib.h"
#include "json.hpp"

#include "atm/session.hpp"
#include "atm/switch.hpp"
#include "atm/teller.hpp"
#include "service_fixture.hpp"
#include "vault_fixture.hpp"

using namespace atm;
using namespace atm::server;
using wire::ResponseCode;
using nlohmann::json;

namespace {

const wire::Token kFresh{1, 2, 3, 4, 5, 6, 7, 8};

struct Bench {
    test::MemVault m;
    SwitchConfig cfg;
    std::string pan = test::pan_for(42);
    vault::AccountId acct = 0;
    minutiae::FingerprintTemplate tmpl = test::small_template();

    Bench()
    {
        cfg.dispense_multiple = 1000;
        acct = m.vault->enroll_cardholder(pan, "1234", tmpl, 10000).account_id;
    }

    wire::AuthCardReq auth(const std::string& pin) const { return {pan, wire::encode_pin_block(pin, pan)}; }

    TransitionResult step(const Session& s, const wire::Message& req, std::int64_t now = 1000)
    {
        return transition(s, req, *m.vault, cfg, {now, kFresh});
    }

    Session in_menu()
    {
        auto r = step(Session{}, auth("1234"));
        r = step(r.next, wire::BioVerifyReq{kFresh, tmpl});
        REQUIRE(r.next.state == SessionState::Menu);
        return r.next;
    }
};

ResponseCode code_of(const wire::Message& m) { return teller::response_code(m); }

minutiae::FingerprintTemplate far_away()
{
    return minutiae::FingerprintTemplate({{900, 900, 300, minutiae::Kind::Bifurcation},
                                          {950, 120, 33, minutiae::Kind::RidgeEnding},
                                          {20, 980, 180, minutiae::Kind::Bifurcation}});
}

} // namespace

TEST_CASE("transition: correct PIN approves the card and issues the token")
{
    Bench b;
    const auto r = b.step(Session{}, b.auth("1234"));
    CHECK(r.next.state == SessionState::AwaitBiometric);
    const auto& resp = std::get<wire::AuthCardResp>(r.response);
    CHECK(resp.code == ResponseCode::Approved);
    CHECK(resp.token == kFresh);
    CHECK_FALSE(wire::is_zero(resp.token));
    REQUIRE(r.audits.size() == 1);
    CHECK(r.audits[0].kind == AuditKind::AuthOk);
}

TEST_CASE("transition: wrong PIN re-prompts, exhaustion terminates and blocks")
{
    Bench b;
    auto r = b.step(Session{}, b.auth("9999"));
    CHECK(r.next.state == SessionState::AwaitCard);
    CHECK(std::get<wire::AuthCardResp>(r.response).code == ResponseCode::InvalidPin);
    CHECK(std::get<wire::AuthCardResp>(r.response).retries_remaining == 2);
    r = b.step(r.next, b.auth("9999"));
    CHECK(r.next.state == SessionState::AwaitCard);
    r = b.step(r.next, b.auth("9999"));
    CHECK(r.next.state == SessionState::Terminated);
    CHECK(std::get<wire::AuthCardResp>(r.response).code == ResponseCode::PinTriesExceeded);
    CHECK(b.m.vault->card(b.pan)->status == vault::CardStatus::Blocked);

    const auto again = b.step(Session{}, b.auth("1234"));
    CHECK(std::get<wire::AuthCardResp>(again.response).code == ResponseCode::CardBlocked);
    CHECK(again.next.state == SessionState::Terminated);
}

TEST_CASE("transition: unknown card re-prompts")
{
    Bench b;
    const auto other = test::pan_for(43);
    const auto r = b.step(Session{}, wire::AuthCardReq{other, wire::encode_pin_block("1234", other)});
    CHECK(r.next.state == SessionState::AwaitCard);
    CHECK(std::get<wire::AuthCardResp>(r.response).code == ResponseCode::InvalidCard);
}

TEST_CASE("transition: a biometric mismatch logs the customer off")
{
    Bench b;
    const auto carded = b.step(Session{}, b.auth("1234")).next;
    const auto r = b.step(carded, wire::BioVerifyReq{kFresh, far_away()});
    CHECK(r.next.state == SessionState::Terminated);
    CHECK(std::get<wire::BioVerifyResp>(r.response).code == ResponseCode::BiometricMismatch);

    b.cfg.bio_max_tries = 2;
    const auto first = b.step(carded, wire::BioVerifyReq{kFresh, far_away()});
    CHECK(first.next.state == SessionState::AwaitBiometric);
    const auto second = b.step(first.next, wire::BioVerifyReq{kFresh, b.tmpl});
    CHECK(second.next.state == SessionState::Menu);
    CHECK(std::get<wire::BioVerifyResp>(second.response).score_milli == 1000);
}

TEST_CASE("transition: menu transactions")
{
    Bench b;
    auto s = b.in_menu();
    auto r = b.step(s, wire::TxnReq{kFresh, wire::TxnType::Withdraw, 20000});
    CHECK(r.next.state == SessionState::Menu);
    CHECK(std::get<wire::TxnResp>(r.response).code == ResponseCode::InsufficientFunds);
    CHECK(std::get<wire::TxnResp>(r.response).balance == 10000);
    CHECK(b.m.vault->balance(b.acct) == 10000);

    r = b.step(r.next, wire::TxnReq{kFresh, wire::TxnType::Withdraw, 3000});
    CHECK(std::get<wire::TxnResp>(r.response).code == ResponseCode::Approved);
    CHECK(std::get<wire::TxnResp>(r.response).balance == 7000);
    REQUIRE(std::get<wire::TxnResp>(r.response).records.size() == 1);

    r = b.step(r.next, wire::TxnReq{kFresh, wire::TxnType::Withdraw, 2500});
    CHECK(std::get<wire::TxnResp>(r.response).code == ResponseCode::NotDispensable);
    r = b.step(r.next, wire::TxnReq{kFresh, wire::TxnType::Deposit, 0});
    CHECK(std::get<wire::TxnResp>(r.response).code == ResponseCode::Malformed);
    r = b.step(r.next, wire::TxnReq{kFresh, wire::TxnType::Deposit, 500});
    CHECK(std::get<wire::TxnResp>(r.response).balance == 7500);
    r = b.step(r.next, wire::TxnReq{kFresh, wire::TxnType::Statement, 0});
    const auto& stmt = std::get<wire::TxnResp>(r.response);
    REQUIRE(stmt.records.size() == 2);
    CHECK(stmt.records[0].kind == 1);
    CHECK(stmt.records[1].kind == 2);
    r = b.step(r.next, wire::TxnReq{kFresh, wire::TxnType::Statement, 1});
    CHECK(std::get<wire::TxnResp>(r.response).records.size() == 1);
    CHECK(r.next.state == SessionState::Menu);

    r = b.step(r.next, wire::EndSession{kFresh});
    CHECK(r.next.state == SessionState::Terminated);
    CHECK(std::holds_alternative<wire::EndSession>(r.response));
}

TEST_CASE("transition: out-of-order requests leave the state alone")
{
    Bench b;
    const Session fresh;
    auto r = b.step(fresh, wire::TxnReq{kFresh, wire::TxnType::Balance, 0});
    CHECK(code_of(r.response) == ResponseCode::InvalidSession);
    CHECK(r.next == fresh);
    r = b.step(fresh, wire::BioVerifyReq{kFresh, b.tmpl});
    CHECK(code_of(r.response) == ResponseCode::InvalidSession);
    CHECK(r.next == fresh);

    const auto carded = b.step(fresh, b.auth("1234")).next;
    r = b.step(carded, wire::TxnReq{kFresh, wire::TxnType::Withdraw, 1000});
    CHECK(code_of(r.response) == ResponseCode::InvalidSession);
    CHECK(r.next == carded);
    r = b.step(carded, wire::AuthCardResp{});
    CHECK(code_of(r.response) == ResponseCode::Malformed);
    CHECK(r.next == carded);
    r = b.step(carded, wire::TxnReq{wire::Token{9}, wire::TxnType::Balance, 0});
    CHECK(code_of(r.response) == ResponseCode::InvalidSession);
    CHECK(r.next == carded);

    Session dead = carded;
    dead.state = SessionState::Terminated;
    for (const wire::Message& m : std::vector<wire::Message>{b.auth("1234"), wire::BioVerifyReq{kFresh, b.tmpl},
                                                             wire::TxnReq{kFresh, wire::TxnType::Balance, 0},
                                                             wire::EndSession{kFresh}}) {
        r = b.step(dead, m);
        CHECK(r.next.state == SessionState::Terminated);
        CHECK(code_of(r.response) == ResponseCode::InvalidSession);
    }
}

TEST_CASE("transition: idle timeout")
{
    Bench b;
    auto s = b.in_menu();
    const auto later = s.last_activity + b.cfg.session_timeout_secs * 1000 + 1;
    const auto r = b.step(s, wire::TxnReq{kFresh, wire::TxnType::Balance, 0}, later);
    CHECK(r.next.state == SessionState::Terminated);
    CHECK(code_of(r.response) == ResponseCode::InvalidSession);
    REQUIRE_FALSE(r.audits.empty());
    CHECK(r.audits[0].kind == AuditKind::Timeout);
}

TEST_CASE("score_milli floors")
{
    CHECK(score_milli(40, 40, 40) == 1000);
    CHECK(score_milli(27, 27, 30) == 947); // 54/57
    CHECK(score_milli(0, 3, 3) == 0);
    CHECK(score_milli(1, 2, 1) == 666);
}

TEST_CASE("config file parsing")
{
    const auto c = parse_config("# demo\nlisten_addr = 0.0.0.0:9000\nmatch.threshold = 0.35\n"
                                "dispense.multiple = 1000  # notes\nbio.max_tries=2\n");
    CHECK(c.listen_addr == "0.0.0.0:9000");
    CHECK(c.match_threshold == doctest::Approx(0.35));
    CHECK(c.dispense_multiple == 1000);
    CHECK(c.bio_max_tries == 2);
    CHECK(c.pin_max_tries == 3);
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("match.threshold = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("pin.max_tries = x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("listen_addr\n"), ConfigError);
    CHECK(parse_host_port("127.0.0.1:0").port == 0);
    CHECK_THROWS(parse_host_port("localhost"));
}

TEST_CASE("switch core: sessions time out through the sweeper")
{
    test::MemVault m;
    const auto pan = test::pan_for(77);
    const auto tmpl = test::small_template();
    m.vault->enroll_cardholder(pan, "1234", tmpl, 10000);
    SwitchConfig cfg;
    cfg.session_timeout_secs = 5;
    auto clock = std::make_shared<std::int64_t>(1'000'000);
    Switch core(*m.vault, cfg, {}, [clock] { return *clock; });

    TerminalSession t;
    core.process(t, wire::AuthCardReq{pan, wire::encode_pin_block("1234", pan)});
    REQUIRE(t.token);
    CHECK(code_of(core.process(t, wire::BioVerifyReq{*t.token, tmpl})) == ResponseCode::Approved);
    CHECK(core.status(*t.token) == Switch::TokenStatus::Live);
    *clock += 5001;
    CHECK(core.expire_idle() == 1);
    CHECK(core.status(*t.token) == Switch::TokenStatus::Terminated);
    CHECK(code_of(core.process(t, wire::TxnReq{*t.token, wire::TxnType::Balance, 0})) == ResponseCode::InvalidSession);
    const auto events = core.audit().events();
    CHECK(std::any_of(events.begin(), events.end(), [](const AuditEvent& e) { return e.kind == AuditKind::Timeout; }));
    *clock += 50'001;
    core.expire_idle();
    CHECK(core.status(*t.token) == Switch::TokenStatus::Unknown);
}

TEST_CASE("switch core: tokens are bound to their terminal")
{
    test::MemVault m;
    const auto pan = test::pan_for(78);
    m.vault->enroll_cardholder(pan, "1234", test::small_template(), 10000);
    Switch core(*m.vault, SwitchConfig{});
    TerminalSession a;
    core.process(a, wire::AuthCardReq{pan, wire::encode_pin_block("1234", pan)});
    REQUIRE(a.token);
    // Another connection quoting a's token does not get a's session.
    TerminalSession b;
    CHECK(code_of(core.process(b, wire::BioVerifyReq{*a.token, test::small_template()}))
          == ResponseCode::InvalidSession);
    CHECK(core.session(*a.token)->state == SessionState::AwaitBiometric);
}

TEST_CASE("TCP: two concurrent terminals keep independent ledgers")
{
    test::LiveSwitch live("tcp_two");
    auto flow = [&](std::size_t who, std::uint64_t amount, ResponseCode* last, std::uint64_t* balance) {
        teller::Client c(live.tcp());
        const auto& r = live.roster[who];
        const auto auth = std::get<wire::AuthCardResp>(c.call(wire::AuthCardReq{r.pan, wire::encode_pin_block(r.pin, r.pan)}));
        const auto bio = std::get<wire::BioVerifyResp>(
            c.call(wire::BioVerifyReq{auth.token, minutiae::load_template(live.sample(r.label + "-0"))}));
        (void)bio;
        for (int i = 0; i < 3; ++i)
            c.call(wire::TxnReq{auth.token, wire::TxnType::Withdraw, amount});
        const auto bal = std::get<wire::TxnResp>(c.call(wire::TxnReq{auth.token, wire::TxnType::Balance, 0}));
        *last = bal.code;
        *balance = bal.balance;
        c.call(wire::EndSession{auth.token});
    };
    ResponseCode c0{}, c1{};
    std::uint64_t b0 = 0, b1 = 0;
    std::thread t0(flow, 0, 1000, &c0, &b0);
    std::thread t1(flow, 1, 2000, &c1, &b1);
    t0.join();
    t1.join();
    CHECK(c0 == ResponseCode::Approved);
    CHECK(c1 == ResponseCode::Approved);
    CHECK(b0 == 7000);
    CHECK(b1 == 4000);
    CHECK(live.service->vault().balance(live.roster[0].account_id) == 7000);
    CHECK(live.service->vault().balance(live.roster[1].account_id) == 4000);
}

TEST_CASE("TCP: bad payloads get ERR Malformed, a corrupt frame closes the connection")
{
    test::LiveSwitch live("tcp_bad");
    {
        teller::Client c(live.tcp());
        CHECK(code_of(c.call(wire::ErrMsg{ResponseCode::Approved})) == ResponseCode::Malformed);
    }

    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(live.service->tcp_port()));
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    auto exchange = [&](const wire::Bytes& out) {
        ::send(fd, out.data(), out.size(), MSG_NOSIGNAL);
        wire::Bytes in(256);
        const auto n = ::recv(fd, in.data(), in.size(), 0);
        in.resize(n > 0 ? static_cast<std::size_t>(n) : 0);
        return in;
    };
    // Well framed END_SESSION with a 3-byte body.
    const auto reply = exchange(wire::encode_frame({wire::kVersion, wire::MessageType::EndSession, {1, 2, 3}}));
    const auto d = wire::decode_frame(reply);
    REQUIRE(d);
    CHECK(std::get<wire::ErrMsg>(wire::decode_message(d->frame)).code == ResponseCode::Malformed);
    auto corrupt = wire::encode_frame(wire::encode_message(wire::EndSession{}));
    corrupt.back() ^= 1;
    CHECK(exchange(corrupt).empty());
    ::close(fd);
}

TEST_CASE("HTTP gateway mirrors the binary protocol")
{
    test::LiveSwitch live("http");
    httplib::Client http("127.0.0.1", live.service->http_port());
    const auto& r = live.roster[0];

    auto post = [&](const std::string& path, const json& body) {
        auto res = http.Post(path, body.dump(), "application/json");
        REQUIRE(res);
        return std::make_pair(res->status, json::parse(res->body));
    };

    auto [st, body] = post("/api/session", {{"pan", r.pan}, {"pin", "0000"}});
    CHECK(st == 409);
    CHECK(body["code"] == "InvalidPin");
    CHECK(body["retries_remaining"] == 2);

    std::tie(st, body) = post("/api/session", {{"pan", r.pan}, {"pin", r.pin}});
    CHECK(st == 200);
    CHECK(body["retries_remaining"] == 3);
    const std::string token = body["token"];
    CHECK(token.size() == 16);

    std::tie(st, body) = post("/api/session/" + token + "/txn", {{"type", "balance"}});
    CHECK(st == 409);
    CHECK(body["code"] == "InvalidSession");

    std::tie(st, body) = post("/api/session/" + token + "/biometric", {{"sample_id", r.label + "-0"}});
    CHECK(st == 200);
    CHECK(body["score"] == 1.0);

    std::tie(st, body) = post("/api/session/" + token + "/txn", {{"type", "withdraw"}, {"amount", 3000}});
    CHECK(st == 200);
    CHECK(body["balance"] == 7000);
    REQUIRE(body["records"].size() == 1);
    CHECK(body["records"][0]["kind"] == "withdrawal");

    std::tie(st, body) = post("/api/session/" + token + "/txn", {{"type", "statement"}});
    CHECK(st == 200);
    CHECK(body["records"].size() == 1);

    std::tie(st, body) = post("/api/session/" + token + "/txn", {{"type", "teleport"}});
    CHECK(st == 400);

    auto del = http.Delete("/api/session/" + token);
    REQUIRE(del);
    CHECK(del->status == 200);
    std::tie(st, body) = post("/api/session/" + token + "/txn", {{"type", "balance"}});
    CHECK(st == 409);

    std::tie(st, body) = post("/api/session/0123456789abcdef/txn", {{"type", "balance"}});
    CHECK(st == 404);

    auto bad = http.Post("/api/session", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    std::tie(st, body) = post("/api/session", {{"pan", r.pan}, {"pin", "12"}});
    CHECK(st == 400);

    auto samples = http.Get("/api/samples");
    REQUIRE(samples);
    const auto ids = json::parse(samples->body)["samples"];
    CHECK(ids.size() == live.roster.size() * 5);
    CHECK(ids[0] == "S000-0");
}

TEST_CASE("HTTP gateway: a mismatching sample ends the session")
{
    test::LiveSwitch live("http_bio");
    httplib::Client http("127.0.0.1", live.service->http_port());
    const auto& r = live.roster[0];
    auto res = http.Post("/api/session", json{{"pan", r.pan}, {"pin", r.pin}}.dump(), "application/json");
    REQUIRE(res);
    const std::string token = json::parse(res->body)["token"];

    const auto probe = far_away();
    json points = json::array();
    for (const auto& m : probe.minutiae())
        points.push_back({{"x", m.x}, {"y", m.y}, {"angle", m.angle}, {"kind", std::string(1, minutiae::kind_code(m.kind))}});
    res = http.Post("/api/session/" + token + "/biometric", json{{"minutiae", points}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["code"] == "BiometricMismatch");

    res = http.Post("/api/session/" + token + "/biometric", json{{"sample_id", r.label + "-0"}}.dump(),
                    "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["code"] == "InvalidSession");
}

TEST_CASE("binary and JSON flows give the same response codes")
{
    test::LiveSwitch live("parity", 2);
    const auto& a = live.roster[0];
    const auto& b = live.roster[1];

    // Binary: teller script.
    const std::string script = "CARD " + a.pan + "\nPIN 0000\nPIN " + a.pin + "\nWITHDRAW 1000\nFINGERPRINT "
                               + live.sample(a.label + "-0").string() + "\nWITHDRAW 3000\nWITHDRAW 2500\n"
                               + "WITHDRAW 99000\nDEPOSIT 700\nBALANCE\nSTATEMENT 2\nEND\n";
    std::vector<ResponseCode> binary;
    {
        teller::Client c(live.tcp());
        teller::Terminal term(c);
        for (const auto& action : teller::parse_script(script))
            if (auto resp = term.perform(action))
                binary.push_back(teller::response_code(*resp));
    }

    // JSON: the same inputs for the other (identically funded) cardholder.
    httplib::Client http("127.0.0.1", live.service->http_port());
    std::vector<ResponseCode> gateway;
    std::string token;
    auto record = [&](const httplib::Result& res) {
        REQUIRE(res);
        const auto body = json::parse(res->body);
        gateway.push_back(*wire::response_code_from_string(body["code"].get<std::string>()));
        if (body.contains("token"))
            token = body["token"];
    };
    auto txn = [&](const std::string& type, int amount) {
        return http.Post("/api/session/" + token + "/txn", json{{"type", type}, {"amount", amount}}.dump(),
                         "application/json");
    };
    record(http.Post("/api/session", json{{"pan", b.pan}, {"pin", "0000"}}.dump(), "application/json"));
    record(http.Post("/api/session", json{{"pan", b.pan}, {"pin", b.pin}}.dump(), "application/json"));
    record(txn("withdraw", 1000));
    record(http.Post("/api/session/" + token + "/biometric", json{{"sample_id", b.label + "-0"}}.dump(),
                     "application/json"));
    record(txn("withdraw", 3000));
    record(txn("withdraw", 2500));
    record(txn("withdraw", 99000));
    record(txn("deposit", 700));
    record(txn("balance", 0));
    record(txn("statement", 2));
    record(http.Delete("/api/session/" + token));

    CHECK(binary == gateway);
    CHECK(binary.size() == 11);
}
