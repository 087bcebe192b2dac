#include "atm/switch_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace atm::server {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value)
{
    T out{};
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || p != value.data() + value.size())
        throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(value) + "'");
    return out;
}

} // namespace

void SwitchConfig::validate() const
{
    try {
        parse_host_port(listen_addr);
        parse_host_port(http_addr);
        match.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(match_threshold >= 0.0 && match_threshold <= 1.0))
        throw ConfigError("match.threshold must lie in [0, 1]");
    if (pin_max_tries < 1 || pin_max_tries > 255)
        throw ConfigError("pin.max_tries must lie in [1, 255]");
    if (bio_max_tries < 1)
        throw ConfigError("bio.max_tries must be at least 1");
    if (session_timeout_secs < 1)
        throw ConfigError("session.timeout_secs must be at least 1");
    if (dispense_multiple < 1)
        throw ConfigError("dispense.multiple must be positive");
    if (data_dir.empty())
        throw ConfigError("data_dir must be set");
}

SwitchConfig parse_config(std::string_view text, SwitchConfig cfg)
{
    std::size_t start = 0;
    int line_no = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key == "listen_addr")
            cfg.listen_addr = value;
        else if (key == "http_addr")
            cfg.http_addr = value;
        else if (key == "data_dir")
            cfg.data_dir = std::string(value);
        else if (key == "match.threshold")
            cfg.match_threshold = parse_number<double>(key, value);
        else if (key == "match.dmax")
            cfg.match.dmax = parse_number<double>(key, value);
        else if (key == "match.atol")
            cfg.match.atol = parse_number<double>(key, value);
        else if (key == "match.rot_limit")
            cfg.match.rot_limit = parse_number<double>(key, value);
        else if (key == "pin.max_tries")
            cfg.pin_max_tries = parse_number<int>(key, value);
        else if (key == "bio.max_tries")
            cfg.bio_max_tries = parse_number<int>(key, value);
        else if (key == "session.timeout_secs")
            cfg.session_timeout_secs = parse_number<int>(key, value);
        else if (key == "dispense.multiple")
            cfg.dispense_multiple = parse_number<std::int64_t>(key, value);
        else
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
    cfg.validate();
    return cfg;
}

SwitchConfig load_config(const std::filesystem::path& path, SwitchConfig base)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), std::move(base));
}

HostPort parse_host_port(std::string_view addr)
{
    const auto colon = addr.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
        throw std::invalid_argument("address must be HOST:PORT, got '" + std::string(addr) + "'");
    HostPort hp;
    hp.host = std::string(addr.substr(0, colon));
    const auto port = addr.substr(colon + 1);
    auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), hp.port);
    if (ec != std::errc{} || p != port.data() + port.size() || hp.port < 0 || hp.port > 65535)
        throw std::invalid_argument("bad port in '" + std::string(addr) + "'");
    return hp;
}

} // namespace atm::server
