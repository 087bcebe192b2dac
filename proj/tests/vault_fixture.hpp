#pragma once

#include <memory>

#include "atm/rng.hpp"
#include "atm/vault.hpp"

namespace atm::test {

/// In-memory vault with a fixed clock and counter salts. `journal` keeps
/// pointing at the sink the vault owns.
struct MemVault {
    vault::MemoryJournal* journal = nullptr;
    std::unique_ptr<vault::Vault> vault;

    static vault::VaultOptions options()
    {
        vault::VaultOptions o;
        auto tick = std::make_shared<std::int64_t>(1'700'000'000'000);
        o.clock = [tick] { return (*tick)++; };
        auto counter = std::make_shared<std::uint8_t>(0);
        o.salt_source = [counter] {
            std::array<std::uint8_t, 16> s{};
            s.fill(++*counter);
            return s;
        };
        return o;
    }

    MemVault()
    {
        auto sink = std::make_unique<vault::MemoryJournal>();
        journal = sink.get();
        vault = std::make_unique<vault::Vault>(std::move(sink), options());
    }
};

inline minutiae::FingerprintTemplate small_template(int shift = 0)
{
    return minutiae::FingerprintTemplate({{100 + shift, 100, 10, minutiae::Kind::RidgeEnding},
                                          {300, 250 + shift, 200, minutiae::Kind::Bifurcation},
                                          {700, 600, 45, minutiae::Kind::RidgeEnding}});
}

/// 16-digit Luhn-valid PAN derived from `n`.
inline std::string pan_for(std::uint64_t n)
{
    std::string body = "400000" + std::string(9 - std::min<std::size_t>(9, std::to_string(n).size()), '0')
                       + std::to_string(n);
    return body + vault::luhn_check_digit(body);
}

} // namespace atm::test
