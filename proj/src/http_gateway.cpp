#include <algorithm>

#include "httplib.h"
#include "json.hpp"

#include "atm/service.hpp"

namespace atm::server {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void bad_request(httplib::Response& res, const std::string& why)
{
    send_json(res, 400, {{"code", "Malformed"}, {"error", why}});
}

int status_for(wire::ResponseCode code)
{
    if (code == wire::ResponseCode::Approved)
        return 200;
    if (code == wire::ResponseCode::Malformed)
        return 400;
    return 409;
}

json record_json(const wire::WireRecord& r)
{
    return {{"seq", r.seq},
            {"kind", r.kind == 1 ? "withdrawal" : "deposit"},
            {"amount", r.amount},
            {"resulting_balance", r.resulting_balance},
            {"timestamp", r.timestamp}};
}

minutiae::FingerprintTemplate template_from_json(const json& arr)
{
    if (!arr.is_array())
        throw std::invalid_argument("minutiae must be an array");
    std::vector<minutiae::Minutia> out;
    for (const auto& m : arr) {
        minutiae::Minutia x;
        x.x = m.at("x").get<int>();
        x.y = m.at("y").get<int>();
        x.angle = m.at("angle").get<int>();
        const auto kind = m.at("kind").get<std::string>();
        if (kind == "E" || kind == "RidgeEnding")
            x.kind = minutiae::Kind::RidgeEnding;
        else if (kind == "B" || kind == "Bifurcation")
            x.kind = minutiae::Kind::Bifurcation;
        else
            throw std::invalid_argument("unknown minutia kind '" + kind + "'");
        out.push_back(x);
    }
    return minutiae::FingerprintTemplate(std::move(out));
}

bool valid_sample_id(const std::string& id)
{
    return !id.empty() && id.size() < 64 && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
}

} // namespace

HttpGateway::HttpGateway(Switch& core, const HostPort& addr, std::filesystem::path samples_dir)
    : core_(core), samples_dir_(std::move(samples_dir)), http_(std::make_unique<httplib::Server>())
{
    install_routes();
    if (addr.port == 0)
        port_ = http_->bind_to_any_port(addr.host);
    else
        port_ = http_->bind_to_port(addr.host, addr.port) ? addr.port : -1;
    if (port_ <= 0)
        throw std::runtime_error("bind failure on HTTP address " + addr.host + ":" + std::to_string(addr.port));
    thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

HttpGateway::~HttpGateway() { stop(); }

void HttpGateway::stop()
{
    if (thread_.joinable()) {
        http_->stop();
        thread_.join();
    }
}

void HttpGateway::install_routes()
{
    // Token routes answer 404 for tokens the switch has never issued (or
    // has already forgotten); everything else goes through Switch::process.
    auto with_token = [this](const httplib::Request& req, httplib::Response& res) -> std::optional<wire::Token> {
        const auto token = wire::token_from_hex(req.matches[1].str());
        if (!token || core_.status(*token) == Switch::TokenStatus::Unknown) {
            send_json(res, 404, {{"error", "unknown token"}});
            return std::nullopt;
        }
        return token;
    };

    http_->Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
        std::string pan;
        std::string pin;
        try {
            const auto body = json::parse(req.body);
            pan = body.at("pan").get<std::string>();
            pin = body.at("pin").get<std::string>();
        } catch (const std::exception& e) {
            return bad_request(res, e.what());
        }
        wire::AuthCardReq auth;
        try {
            auth.pan = pan;
            auth.pin_block = wire::encode_pin_block(pin, pan);
            // same validation the binary decoder applies
            wire::decode_message(wire::encode_message(auth));
        } catch (const std::exception& e) {
            return bad_request(res, e.what());
        }
        TerminalSession terminal;
        const auto resp = std::get<wire::AuthCardResp>(core_.process(terminal, auth));
        json body{{"code", std::string(wire::to_string(resp.code))}, {"retries_remaining", resp.retries_remaining}};
        if (resp.code == wire::ResponseCode::Approved)
            body["token"] = wire::token_hex(resp.token);
        send_json(res, status_for(resp.code), body);
    });

    http_->Post(R"(/api/session/([0-9A-Fa-f]+)/biometric)", [this, with_token](const httplib::Request& req,
                                                                               httplib::Response& res) {
        const auto token = with_token(req, res);
        if (!token)
            return;
        std::optional<minutiae::FingerprintTemplate> sample;
        try {
            const auto body = json::parse(req.body);
            if (body.contains("minutiae")) {
                sample = template_from_json(body.at("minutiae"));
            } else {
                const auto id = body.at("sample_id").get<std::string>();
                if (!valid_sample_id(id))
                    return bad_request(res, "bad sample_id");
                const auto path = samples_dir_ / (id + ".min");
                if (!std::filesystem::exists(path))
                    return bad_request(res, "unknown sample_id");
                sample = minutiae::load_template(path);
            }
        } catch (const std::exception& e) {
            return bad_request(res, e.what());
        }
        TerminalSession terminal{*token, false};
        const auto resp = std::get<wire::BioVerifyResp>(core_.process(terminal, wire::BioVerifyReq{*token, *sample}));
        send_json(res, status_for(resp.code),
                  {{"code", std::string(wire::to_string(resp.code))}, {"score", resp.score_milli / 1000.0}});
    });

    http_->Post(R"(/api/session/([0-9A-Fa-f]+)/txn)", [this, with_token](const httplib::Request& req,
                                                                         httplib::Response& res) {
        const auto token = with_token(req, res);
        if (!token)
            return;
        wire::TxnReq txn;
        txn.token = *token;
        try {
            const auto body = json::parse(req.body);
            const auto type = body.at("type").get<std::string>();
            if (type == "withdraw")
                txn.type = wire::TxnType::Withdraw;
            else if (type == "deposit")
                txn.type = wire::TxnType::Deposit;
            else if (type == "balance")
                txn.type = wire::TxnType::Balance;
            else if (type == "statement")
                txn.type = wire::TxnType::Statement;
            else
                return bad_request(res, "unknown transaction type");
            txn.amount = body.value("amount", std::uint64_t{0});
        } catch (const std::exception& e) {
            return bad_request(res, e.what());
        }
        TerminalSession terminal{*token, false};
        const auto resp = std::get<wire::TxnResp>(core_.process(terminal, txn));
        json body{{"code", std::string(wire::to_string(resp.code))}, {"balance", resp.balance}};
        if (!resp.records.empty() || txn.type == wire::TxnType::Statement) {
            body["records"] = json::array();
            for (const auto& r : resp.records)
                body["records"].push_back(record_json(r));
        }
        send_json(res, status_for(resp.code), body);
    });

    http_->Delete(R"(/api/session/([0-9A-Fa-f]+))", [this, with_token](const httplib::Request& req,
                                                                      httplib::Response& res) {
        const auto token = with_token(req, res);
        if (!token)
            return;
        TerminalSession terminal{*token, false};
        const auto resp = core_.process(terminal, wire::EndSession{*token});
        if (const auto* err = std::get_if<wire::ErrMsg>(&resp))
            return send_json(res, status_for(err->code), {{"code", std::string(wire::to_string(err->code))}});
        send_json(res, 200, {{"code", "Approved"}});
    });

    http_->Get("/api/samples", [this](const httplib::Request&, httplib::Response& res) {
        std::vector<std::string> ids;
        std::error_code ec;
        for (const auto& entry : std::filesystem::directory_iterator(samples_dir_, ec))
            if (entry.path().extension() == ".min")
                ids.push_back(entry.path().stem().string());
        std::sort(ids.begin(), ids.end());
        send_json(res, 200, {{"samples", ids}});
    });
}

Service::Service(SwitchConfig config, ServiceOptions options)
{
    config.validate();
    data_ = std::make_unique<vault::DataDir>(config.data_dir, std::move(options.vault));
    auto audit = std::make_shared<AuditLog>(config.data_dir / "audit.log");
    core_ = std::make_unique<Switch>(data_->vault(), config, std::move(options.tokens), std::move(options.clock), audit);
    tcp_ = std::make_unique<TcpServer>(*core_, parse_host_port(config.listen_addr));
    if (options.enable_http)
        http_ = std::make_unique<HttpGateway>(*core_, parse_host_port(config.http_addr), config.data_dir / "samples");
    sweeper_ = std::thread([this] {
        std::unique_lock lock(sweep_mu_);
        while (!sweep_cv_.wait_for(lock, std::chrono::milliseconds(250), [this] { return stopping_; }))
            core_->expire_idle();
    });
}

Service::~Service() { stop(); }

void Service::stop()
{
    {
        std::lock_guard lock(sweep_mu_);
        if (stopping_)
            return;
        stopping_ = true;
    }
    sweep_cv_.notify_all();
    if (sweeper_.joinable())
        sweeper_.join();
    if (http_)
        http_->stop();
    tcp_->stop();
}

} // namespace atm::server
