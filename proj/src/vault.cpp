#include "atm/vault.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <mutex>
#include <sstream>
#include <sys/file.h>
#include <unistd.h>
#include <variant>

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include "atm/wire.hpp"

namespace atm::vault {

namespace {

bool all_digits(std::string_view s)
{
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Journal entries. Each one maps to exactly one line.

struct EnrollEntry {
    std::string pan;
    AccountId account_id = 0;
    std::uint64_t template_id = 0;
    PinDigest digest;
    Money opening_balance = 0;
    std::vector<std::uint8_t> template_bytes;
};
struct BlockEntry {
    std::string pan;
};
struct UnblockEntry {
    std::string pan;
};
struct PinFailEntry {
    std::string pan;
    int attempts = 0;
};
struct PinOkEntry {
    std::string pan;
};
struct TxnEntry {
    TxnKind kind = TxnKind::Deposit;
    AccountId account_id = 0;
    Money amount = 0;
    Money resulting_balance = 0;
};

using Payload = std::variant<EnrollEntry, BlockEntry, UnblockEntry, PinFailEntry, PinOkEntry, TxnEntry>;

struct Entry {
    std::uint64_t seq = 0;
    std::int64_t timestamp = 0;
    Payload payload;
};

template <std::size_t N>
std::optional<std::array<std::uint8_t, N>> fixed_from_hex(std::string_view hex);

std::optional<std::vector<std::uint8_t>> bytes_from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0)
        return std::nullopt;
    std::vector<std::uint8_t> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        unsigned v = 0;
        auto [p, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, v, 16);
        if (ec != std::errc{} || p != hex.data() + 2 * i + 2)
            return std::nullopt;
        out[i] = static_cast<std::uint8_t>(v);
    }
    return out;
}

template <std::size_t N>
std::optional<std::array<std::uint8_t, N>> fixed_from_hex(std::string_view hex)
{
    auto v = bytes_from_hex(hex);
    if (!v || v->size() != N)
        return std::nullopt;
    std::array<std::uint8_t, N> out{};
    std::copy(v->begin(), v->end(), out.begin());
    return out;
}

std::string format_entry(const Entry& e)
{
    std::ostringstream os;
    os << e.seq << '|' << e.timestamp << '|';
    std::visit(
        [&os](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, EnrollEntry>) {
                os << "ENROLL|" << p.pan << '|' << p.account_id << '|' << p.template_id << '|'
                   << wire::to_hex(p.digest.salt) << '|' << p.digest.iterations << '|' << wire::to_hex(p.digest.digest)
                   << '|' << p.opening_balance << '|' << wire::to_hex(p.template_bytes);
            } else if constexpr (std::is_same_v<T, BlockEntry>) {
                os << "BLOCK|" << p.pan;
            } else if constexpr (std::is_same_v<T, UnblockEntry>) {
                os << "UNBLOCK|" << p.pan;
            } else if constexpr (std::is_same_v<T, PinFailEntry>) {
                os << "PINFAIL|" << p.pan << '|' << p.attempts;
            } else if constexpr (std::is_same_v<T, PinOkEntry>) {
                os << "PINOK|" << p.pan;
            } else if constexpr (std::is_same_v<T, TxnEntry>) {
                os << (p.kind == TxnKind::Deposit ? "DEP|" : "WDR|") << p.account_id << '|' << p.amount << '|'
                   << p.resulting_balance;
            }
        },
        e.payload);
    return os.str();
}

std::vector<std::string_view> split_pipes(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find('|', start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
T number(std::string_view s)
{
    T v{};
    if (s.empty())
        throw JournalCorrupt("empty numeric field");
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw JournalCorrupt("bad numeric field '" + std::string(s) + "'");
    return v;
}

Entry parse_body(std::string_view body)
{
    const auto f = split_pipes(body);
    if (f.size() < 3)
        throw JournalCorrupt("too few fields");
    Entry e;
    e.seq = number<std::uint64_t>(f[0]);
    e.timestamp = number<std::int64_t>(f[1]);
    const auto kind = f[2];
    auto expect = [&](std::size_t n) {
        if (f.size() != n)
            throw JournalCorrupt("wrong field count for " + std::string(kind));
    };
    if (kind == "ENROLL") {
        expect(11);
        EnrollEntry p;
        p.pan = std::string(f[3]);
        p.account_id = number<AccountId>(f[4]);
        p.template_id = number<std::uint64_t>(f[5]);
        auto salt = fixed_from_hex<16>(f[6]);
        p.digest.iterations = number<int>(f[7]);
        auto digest = fixed_from_hex<32>(f[8]);
        p.opening_balance = number<Money>(f[9]);
        auto tmpl = bytes_from_hex(f[10]);
        if (!salt || !digest || !tmpl)
            throw JournalCorrupt("bad hex field in ENROLL");
        p.digest.salt = *salt;
        p.digest.digest = *digest;
        p.template_bytes = std::move(*tmpl);
        e.payload = std::move(p);
    } else if (kind == "BLOCK") {
        expect(4);
        e.payload = BlockEntry{std::string(f[3])};
    } else if (kind == "UNBLOCK") {
        expect(4);
        e.payload = UnblockEntry{std::string(f[3])};
    } else if (kind == "PINFAIL") {
        expect(5);
        e.payload = PinFailEntry{std::string(f[3]), number<int>(f[4])};
    } else if (kind == "PINOK") {
        expect(4);
        e.payload = PinOkEntry{std::string(f[3])};
    } else if (kind == "DEP" || kind == "WDR") {
        expect(6);
        TxnEntry p;
        p.kind = kind == "DEP" ? TxnKind::Deposit : TxnKind::Withdrawal;
        p.account_id = number<AccountId>(f[3]);
        p.amount = number<Money>(f[4]);
        p.resulting_balance = number<Money>(f[5]);
        e.payload = p;
    } else {
        throw JournalCorrupt("unknown journal kind '" + std::string(kind) + "'");
    }
    return e;
}

CardRecord& card_in(VaultState& s, const std::string& pan)
{
    auto it = s.cards.find(pan);
    if (it == s.cards.end())
        throw JournalCorrupt("journal references unknown card");
    return it->second;
}

/// Applies one entry, checking it against the state it extends. Shared by
/// live mutation and replay so both paths produce identical state.
void apply(VaultState& s, const Entry& e)
{
    if (e.seq != s.next_seq)
        throw JournalCorrupt("sequence gap: expected " + std::to_string(s.next_seq) + ", got " + std::to_string(e.seq));
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, EnrollEntry>) {
                if (s.cards.count(p.pan) || p.account_id != s.next_id || p.template_id != s.next_id
                    || p.opening_balance < 0)
                    throw JournalCorrupt("inconsistent ENROLL");
                minutiae::FingerprintTemplate tmpl = [&] {
                    try {
                        return wire::decode_minutiae(p.template_bytes);
                    } catch (const std::exception& ex) {
                        throw JournalCorrupt(std::string("bad template in ENROLL: ") + ex.what());
                    }
                }();
                CardRecord card;
                card.pan = p.pan;
                card.pin_digest = p.digest;
                card.template_id = p.template_id;
                card.account_id = p.account_id;
                s.cards.emplace(p.pan, std::move(card));
                Account acct;
                acct.account_id = p.account_id;
                acct.opening_balance = p.opening_balance;
                acct.balance = p.opening_balance;
                s.accounts.emplace(p.account_id, std::move(acct));
                s.templates.emplace(p.template_id, std::move(tmpl));
                ++s.next_id;
            } else if constexpr (std::is_same_v<T, BlockEntry>) {
                card_in(s, p.pan).status = CardStatus::Blocked;
            } else if constexpr (std::is_same_v<T, UnblockEntry>) {
                auto& c = card_in(s, p.pan);
                c.status = CardStatus::Active;
                c.failed_pin_attempts = 0;
            } else if constexpr (std::is_same_v<T, PinFailEntry>) {
                auto& c = card_in(s, p.pan);
                if (p.attempts != c.failed_pin_attempts + 1)
                    throw JournalCorrupt("inconsistent PINFAIL");
                c.failed_pin_attempts = p.attempts;
            } else if constexpr (std::is_same_v<T, PinOkEntry>) {
                card_in(s, p.pan).failed_pin_attempts = 0;
            } else if constexpr (std::is_same_v<T, TxnEntry>) {
                auto it = s.accounts.find(p.account_id);
                if (it == s.accounts.end())
                    throw JournalCorrupt("journal references unknown account");
                auto& acct = it->second;
                const Money expected = p.kind == TxnKind::Deposit ? acct.balance + p.amount : acct.balance - p.amount;
                if (p.amount <= 0 || expected < 0 || expected != p.resulting_balance)
                    throw JournalCorrupt("inconsistent transaction balance");
                acct.balance = expected;
                acct.records.push_back({e.seq, e.timestamp, p.kind, p.amount, expected});
            }
        },
        e.payload);
    ++s.next_seq;
}

std::array<std::uint8_t, 16> os_salt()
{
    std::array<std::uint8_t, 16> salt{};
    if (RAND_bytes(salt.data(), static_cast<int>(salt.size())) != 1)
        throw std::runtime_error("RAND_bytes failed");
    return salt;
}

} // namespace

bool luhn_check(std::string_view pan)
{
    if (pan.empty())
        throw std::invalid_argument("empty card number");
    if (!all_digits(pan))
        throw std::invalid_argument("card number contains non-digits");
    int sum = 0;
    bool dbl = false;
    for (auto it = pan.rbegin(); it != pan.rend(); ++it) {
        int d = *it - '0';
        if (dbl) {
            d *= 2;
            if (d > 9)
                d -= 9;
        }
        sum += d;
        dbl = !dbl;
    }
    return sum % 10 == 0;
}

char luhn_check_digit(std::string_view partial)
{
    std::string candidate(partial);
    candidate.push_back('0');
    for (char d = '0'; d <= '9'; ++d) {
        candidate.back() = d;
        if (luhn_check(candidate))
            return d;
    }
    throw std::logic_error("no Luhn check digit");
}

PinDigest derive_pin_digest(std::string_view pin, const std::array<std::uint8_t, 16>& salt, int iterations)
{
    PinDigest d;
    d.salt = salt;
    d.iterations = iterations;
    if (PKCS5_PBKDF2_HMAC(pin.data(), static_cast<int>(pin.size()), salt.data(), static_cast<int>(salt.size()),
                          iterations, EVP_sha256(), static_cast<int>(d.digest.size()), d.digest.data())
        != 1)
        throw std::runtime_error("PBKDF2 failed");
    return d;
}

bool pin_matches(const PinDigest& stored, std::string_view candidate)
{
    const auto d = derive_pin_digest(candidate, stored.salt, stored.iterations);
    return CRYPTO_memcmp(d.digest.data(), stored.digest.data(), d.digest.size()) == 0;
}

Vault::Vault(std::unique_ptr<JournalSink> journal, VaultOptions options)
    : journal_(std::move(journal)), options_(std::move(options))
{
    if (!journal_)
        throw std::invalid_argument("vault needs a journal sink");
    if (options_.pin_iterations < 10000)
        throw std::invalid_argument("PIN digest needs at least 10000 iterations");
}

std::unique_ptr<Vault> Vault::restore(std::string_view journal_bytes, std::unique_ptr<JournalSink> journal,
                                      VaultOptions options)
{
    auto v = std::make_unique<Vault>(std::move(journal), std::move(options));
    v->state_ = replay(journal_bytes).state;
    return v;
}

std::int64_t Vault::now() const
{
    if (options_.clock)
        return options_.clock();
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Account& Vault::account_ref(AccountId id)
{
    auto it = state_.accounts.find(id);
    if (it == state_.accounts.end())
        throw VaultError(VaultErrorKind::UnknownAccount, "unknown account " + std::to_string(id));
    return it->second;
}

const Account& Vault::account_ref(AccountId id) const
{
    auto it = state_.accounts.find(id);
    if (it == state_.accounts.end())
        throw VaultError(VaultErrorKind::UnknownAccount, "unknown account " + std::to_string(id));
    return it->second;
}

CardRecord& Vault::card_ref(std::string_view pan)
{
    auto it = state_.cards.find(std::string(pan));
    if (it == state_.cards.end())
        throw VaultError(VaultErrorKind::UnknownCard, "unknown card");
    return it->second;
}

namespace {

// The line is durable before the state changes; callers validate first.
void commit(JournalSink& journal, VaultState& state, const Entry& entry)
{
    journal.append(seal_line(format_entry(entry)));
    apply(state, entry);
}

} // namespace

const CardRecord& Vault::enroll_cardholder(std::string_view pan, std::string_view pin,
                                           const minutiae::FingerprintTemplate& tmpl, Money opening_balance)
{
    if (pan.size() < 11 || pan.size() > 19 || !all_digits(pan) || !luhn_check(pan))
        throw VaultError(VaultErrorKind::InvalidPan, "invalid card number");
    if (pin.size() < 4 || pin.size() > 6 || !all_digits(pin))
        throw VaultError(VaultErrorKind::InvalidPinFormat, "PIN must be 4 to 6 digits");
    if (opening_balance < 0)
        throw VaultError(VaultErrorKind::InvalidAmount, "opening balance must be non-negative");

    std::unique_lock lock(mu_);
    if (state_.cards.count(std::string(pan)))
        throw VaultError(VaultErrorKind::DuplicatePan, "card number already enrolled");

    const auto salt = options_.salt_source ? options_.salt_source() : os_salt();
    EnrollEntry p;
    p.pan = std::string(pan);
    p.account_id = state_.next_id;
    p.template_id = state_.next_id;
    p.digest = derive_pin_digest(pin, salt, options_.pin_iterations);
    p.opening_balance = opening_balance;
    p.template_bytes = wire::encode_minutiae(tmpl);
    commit(*journal_, state_, {state_.next_seq, now(), std::move(p)});
    return state_.cards.at(std::string(pan));
}

PinCheck Vault::verify_pin(std::string_view pan, std::string_view candidate_pin, int max_tries)
{
    if (max_tries < 1)
        throw std::invalid_argument("max_tries must be at least 1");
    CardRecord snapshot;
    {
        std::shared_lock lock(mu_);
        auto it = state_.cards.find(std::string(pan));
        if (it == state_.cards.end())
            return {PinOutcome::UnknownCard, 0, false};
        snapshot = it->second;
    }
    if (snapshot.status == CardStatus::Blocked)
        return {PinOutcome::Blocked, 0, false};

    const bool ok = pin_matches(snapshot.pin_digest, candidate_pin);

    std::unique_lock lock(mu_);
    auto& card = card_ref(pan);
    if (card.status == CardStatus::Blocked)
        return {PinOutcome::Blocked, 0, false};
    if (ok) {
        if (card.failed_pin_attempts > 0)
            commit(*journal_, state_, {state_.next_seq, now(), PinOkEntry{card.pan}});
        return {PinOutcome::Ok, max_tries, false};
    }
    const int attempts = card.failed_pin_attempts + 1;
    commit(*journal_, state_, {state_.next_seq, now(), PinFailEntry{card.pan, attempts}});
    if (attempts >= max_tries) {
        commit(*journal_, state_, {state_.next_seq, now(), BlockEntry{card.pan}});
        return {PinOutcome::Blocked, 0, true};
    }
    return {PinOutcome::WrongPin, max_tries - attempts, false};
}

void Vault::block(std::string_view pan)
{
    std::unique_lock lock(mu_);
    auto& card = card_ref(pan);
    if (card.status == CardStatus::Blocked)
        return;
    commit(*journal_, state_, {state_.next_seq, now(), BlockEntry{card.pan}});
}

void Vault::unblock(std::string_view pan)
{
    std::unique_lock lock(mu_);
    auto& card = card_ref(pan);
    if (card.status == CardStatus::Active && card.failed_pin_attempts == 0)
        return;
    commit(*journal_, state_, {state_.next_seq, now(), UnblockEntry{card.pan}});
}

TransactionRecord Vault::deposit(AccountId account, Money amount)
{
    if (amount <= 0)
        throw VaultError(VaultErrorKind::InvalidAmount, "deposit amount must be positive");
    std::unique_lock lock(mu_);
    auto& acct = account_ref(account);
    commit(*journal_, state_, {state_.next_seq, now(), TxnEntry{TxnKind::Deposit, account, amount, acct.balance + amount}});
    return acct.records.back();
}

TransactionRecord Vault::withdraw(AccountId account, Money amount, Money dispense_multiple)
{
    if (amount <= 0)
        throw VaultError(VaultErrorKind::InvalidAmount, "withdrawal amount must be positive");
    if (dispense_multiple <= 0)
        throw std::invalid_argument("dispense multiple must be positive");
    std::unique_lock lock(mu_);
    auto& acct = account_ref(account);
    if (amount % dispense_multiple != 0)
        throw VaultError(VaultErrorKind::NotDispensable, "amount is not a multiple of " + std::to_string(dispense_multiple));
    if (amount > acct.balance)
        throw VaultError(VaultErrorKind::InsufficientFunds, "insufficient funds");
    commit(*journal_, state_,
           {state_.next_seq, now(), TxnEntry{TxnKind::Withdrawal, account, amount, acct.balance - amount}});
    return acct.records.back();
}

std::vector<TransactionRecord> Vault::statement(AccountId account, int n) const
{
    if (n < 1)
        throw std::invalid_argument("statement depth must be at least 1");
    std::shared_lock lock(mu_);
    const auto& records = account_ref(account).records;
    const auto take = std::min(records.size(), static_cast<std::size_t>(n));
    return {records.end() - static_cast<std::ptrdiff_t>(take), records.end()};
}

Money Vault::balance(AccountId account) const
{
    std::shared_lock lock(mu_);
    return account_ref(account).balance;
}

std::optional<CardRecord> Vault::card(std::string_view pan) const
{
    std::shared_lock lock(mu_);
    auto it = state_.cards.find(std::string(pan));
    if (it == state_.cards.end())
        return std::nullopt;
    return it->second;
}

std::optional<minutiae::FingerprintTemplate> Vault::enrolled_template(std::string_view pan) const
{
    std::shared_lock lock(mu_);
    auto it = state_.cards.find(std::string(pan));
    if (it == state_.cards.end())
        return std::nullopt;
    return state_.templates.at(it->second.template_id);
}

std::vector<CardRecord> Vault::cards() const
{
    std::shared_lock lock(mu_);
    std::vector<CardRecord> out;
    for (const auto& [pan, card] : state_.cards)
        out.push_back(card);
    return out;
}

VaultState Vault::snapshot() const
{
    std::shared_lock lock(mu_);
    return state_;
}

ReplayOutcome replay(std::string_view bytes)
{
    ReplayOutcome out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < bytes.size()) {
        ++line_no;
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) {
            // torn final write
            out.dropped_bytes = bytes.size() - pos;
            break;
        }
        const auto line = bytes.substr(pos, nl - pos);
        const bool is_last = nl + 1 == bytes.size();
        const auto bar = line.rfind('|');
        bool crc_ok = false;
        if (bar != std::string_view::npos && line.size() - bar - 1 == 4) {
            unsigned crc = 0;
            const auto hex = line.substr(bar + 1);
            auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), crc, 16);
            const bool upper = std::none_of(hex.begin(), hex.end(), [](char c) { return c >= 'a' && c <= 'f'; });
            crc_ok = ec == std::errc{} && p == hex.data() + hex.size() && upper
                     && crc == wire::crc16(line.substr(0, bar));
        }
        if (!crc_ok) {
            if (is_last) {
                out.dropped_bytes = bytes.size() - pos;
                break;
            }
            throw JournalCorrupt("journal line " + std::to_string(line_no) + " fails its CRC");
        }
        try {
            apply(out.state, parse_body(line.substr(0, bar)));
        } catch (const JournalCorrupt& e) {
            throw JournalCorrupt("journal line " + std::to_string(line_no) + ": " + e.what());
        }
        pos = nl + 1;
    }
    out.valid_length = pos;
    return out;
}

DataDir::DataDir(const std::filesystem::path& dir, VaultOptions options) : dir_(dir)
{
    std::filesystem::create_directories(dir_);
    const auto lock_path = dir_ / "LOCK";
    lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0600);
    if (lock_fd_ < 0)
        throw std::runtime_error("cannot open lock file " + lock_path.string() + ": " + std::strerror(errno));
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        lock_fd_ = -1;
        throw JournalLocked("journal locked: " + dir_.string() + " is in use by another process");
    }

    std::string bytes;
    {
        std::ifstream in(journal_path(), std::ios::binary);
        if (in) {
            std::ostringstream buf;
            buf << in.rdbuf();
            bytes = buf.str();
        }
    }
    auto outcome = replay(bytes);
    dropped_ = outcome.dropped_bytes;
    if (dropped_ > 0)
        std::filesystem::resize_file(journal_path(), outcome.valid_length);

    vault_ = std::make_unique<Vault>(std::make_unique<FileJournal>(journal_path()), std::move(options));
    vault_->state_ = std::move(outcome.state);
}

DataDir::~DataDir()
{
    vault_.reset();
    if (lock_fd_ >= 0) {
        ::flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
    }
}

} // namespace atm::vault
