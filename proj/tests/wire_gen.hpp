#pragma once

// Random valid messages for round-trip tests.

#include <set>

#include "atm/rng.hpp"
#include "atm/wire.hpp"

namespace atm::test {

inline wire::Token random_token(DeterministicRng& rng)
{
    wire::Token t{};
    for (auto& b : t)
        b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return t;
}

inline wire::ResponseCode random_code(DeterministicRng& rng)
{
    return *wire::response_code_from_byte(static_cast<std::uint8_t>(rng.uniform_int(0, 9)));
}

inline minutiae::FingerprintTemplate random_sample(DeterministicRng& rng, int max_n = 60)
{
    const int n = static_cast<int>(rng.uniform_int(1, max_n));
    std::vector<minutiae::Minutia> m;
    std::set<std::pair<int, int>> seen;
    while (static_cast<int>(m.size()) < n) {
        const int x = static_cast<int>(rng.uniform_int(0, minutiae::kFieldMax));
        const int y = static_cast<int>(rng.uniform_int(0, minutiae::kFieldMax));
        if (!seen.insert({x, y}).second)
            continue;
        m.push_back({x, y, static_cast<int>(rng.uniform_int(0, 359)),
                     rng.bernoulli(0.5) ? minutiae::Kind::Bifurcation : minutiae::Kind::RidgeEnding});
    }
    return minutiae::FingerprintTemplate(std::move(m));
}

/// `type` indexes the Message alternatives in declaration order.
inline wire::Message random_message(DeterministicRng& rng, int type)
{
    switch (type) {
    case 0: {
        std::string pan(static_cast<std::size_t>(rng.uniform_int(1, 19)), '0');
        for (auto& c : pan)
            c = static_cast<char>('0' + rng.uniform_int(0, 9));
        wire::PinBlock block{};
        for (auto& b : block)
            b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
        return wire::AuthCardReq{pan, block};
    }
    case 1:
        return wire::AuthCardResp{random_code(rng), random_token(rng), static_cast<std::uint8_t>(rng.uniform_int(0, 255))};
    case 2:
        return wire::BioVerifyReq{random_token(rng), random_sample(rng)};
    case 3:
        return wire::BioVerifyResp{random_code(rng), static_cast<std::uint16_t>(rng.uniform_int(0, 1000))};
    case 4:
        return wire::TxnReq{random_token(rng), static_cast<wire::TxnType>(rng.uniform_int(1, 4)), rng.next_u64()};
    case 5: {
        wire::TxnResp r{random_code(rng), rng.next_u64(), {}};
        const auto n = rng.uniform_int(0, 12);
        for (std::uint64_t i = 0; i < n; ++i)
            r.records.push_back({static_cast<std::uint32_t>(rng.next_u64()), static_cast<std::uint8_t>(rng.uniform_int(1, 2)),
                                 rng.next_u64(), rng.next_u64(), rng.next_u64()});
        return r;
    }
    case 6:
        return wire::EndSession{random_token(rng)};
    default:
        return wire::ErrMsg{random_code(rng)};
    }
}

} // namespace atm::test
