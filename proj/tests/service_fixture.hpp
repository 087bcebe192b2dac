#pragma once

#include <unistd.h>

#include "atm/enroll.hpp"
#include "atm/service.hpp"

namespace atm::test {

inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("atm_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Seeded data directory plus a running switch on ephemeral ports.
struct LiveSwitch {
    std::filesystem::path dir;
    std::vector<enroll::RosterEntry> roster;
    std::unique_ptr<server::Service> service;

    explicit LiveSwitch(const std::string& name, int subjects = 3, vault::Money opening = 10000,
                        server::ServiceOptions options = {})
        : dir(scratch_dir(name))
    {
        enroll::SeedOptions seed;
        seed.n_subjects = subjects;
        seed.opening_balance = opening;
        roster = enroll::seed_population(dir, seed);
        service = std::make_unique<server::Service>(config(), std::move(options));
    }

    ~LiveSwitch()
    {
        service.reset();
        std::filesystem::remove_all(dir);
    }

    server::SwitchConfig config() const
    {
        server::SwitchConfig c;
        c.data_dir = dir;
        c.listen_addr = "127.0.0.1:0";
        c.http_addr = "127.0.0.1:0";
        c.dispense_multiple = 1000;
        return c;
    }

    server::HostPort tcp() const { return {"127.0.0.1", service->tcp_port()}; }
    std::filesystem::path sample(const std::string& id) const { return dir / "samples" / (id + ".min"); }
};

} // namespace atm::test
