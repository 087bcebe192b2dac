#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "atm/minutiae.hpp"

namespace atm::server {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SwitchConfig {
    std::string listen_addr = "127.0.0.1:7400";
    std::string http_addr = "127.0.0.1:8080";
    std::filesystem::path data_dir = "data";
    double match_threshold = 0.4;
    minutiae::MatchParams match;
    int pin_max_tries = 3;
    int bio_max_tries = 1;
    int session_timeout_secs = 90;
    std::int64_t dispense_multiple = 50000;

    /// Throws ConfigError.
    void validate() const;
};

/// Applies `key = value` lines over `base`. `#` starts a comment.
SwitchConfig parse_config(std::string_view text, SwitchConfig base = {});
SwitchConfig load_config(const std::filesystem::path& path, SwitchConfig base = {});

struct HostPort {
    std::string host;
    int port = 0;
};

/// "HOST:PORT"; port 0 asks the OS for an ephemeral port.
HostPort parse_host_port(std::string_view addr);

} // namespace atm::server
