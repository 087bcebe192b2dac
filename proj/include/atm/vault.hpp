#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "atm/journal.hpp"
#include "atm/minutiae.hpp"

namespace atm::vault {

using Money = std::int64_t; // minor units (kobo)
using AccountId = std::uint64_t;

/// Luhn mod-10 check. Throws std::invalid_argument on empty or non-digit input.
bool luhn_check(std::string_view pan);

/// The digit that makes `partial` + digit Luhn-valid.
char luhn_check_digit(std::string_view partial);

struct PinDigest {
    std::array<std::uint8_t, 16> salt{};
    int iterations = 10000;
    std::array<std::uint8_t, 32> digest{};

    friend bool operator==(const PinDigest&, const PinDigest&) = default;
};

/// PBKDF2-HMAC-SHA256 over the PIN digits.
PinDigest derive_pin_digest(std::string_view pin, const std::array<std::uint8_t, 16>& salt, int iterations);
bool pin_matches(const PinDigest& stored, std::string_view candidate);

enum class CardStatus { Active, Blocked };

struct CardRecord {
    std::string pan;
    PinDigest pin_digest;
    std::uint64_t template_id = 0;
    AccountId account_id = 0;
    CardStatus status = CardStatus::Active;
    int failed_pin_attempts = 0;

    friend bool operator==(const CardRecord&, const CardRecord&) = default;
};

enum class TxnKind { Deposit, Withdrawal };

struct TransactionRecord {
    std::uint64_t seq = 0;
    std::int64_t timestamp = 0; // unix ms
    TxnKind kind = TxnKind::Deposit;
    Money amount = 0;
    Money resulting_balance = 0;

    friend bool operator==(const TransactionRecord&, const TransactionRecord&) = default;
};

struct Account {
    AccountId account_id = 0;
    Money opening_balance = 0;
    Money balance = 0;
    std::vector<TransactionRecord> records;

    friend bool operator==(const Account&, const Account&) = default;
};

/// Everything replay reconstructs; compared wholesale in tests.
struct VaultState {
    std::map<std::string, CardRecord> cards; // by PAN
    std::map<AccountId, Account> accounts;
    std::map<std::uint64_t, minutiae::FingerprintTemplate> templates;
    std::uint64_t next_seq = 1;
    std::uint64_t next_id = 1;

    friend bool operator==(const VaultState&, const VaultState&) = default;
};

enum class VaultErrorKind {
    InvalidPan,
    DuplicatePan,
    InvalidPinFormat,
    InvalidTemplate,
    InvalidAmount,
    UnknownAccount,
    UnknownCard,
    InsufficientFunds,
    NotDispensable,
};

class VaultError : public std::runtime_error {
public:
    VaultError(VaultErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    VaultErrorKind kind() const noexcept { return kind_; }

private:
    VaultErrorKind kind_;
};

enum class PinOutcome { Ok, WrongPin, Blocked, UnknownCard };

struct PinCheck {
    PinOutcome outcome = PinOutcome::UnknownCard;
    int remaining = 0;
    /// True when this call exhausted the tries and blocked the card.
    bool just_blocked = false;
};

struct VaultOptions {
    int pin_iterations = 10000;
    std::function<std::int64_t()> clock;                      // unix ms; system clock when empty
    std::function<std::array<std::uint8_t, 16>()> salt_source; // OS randomness when empty
};

inline constexpr Money kDefaultDispenseMultiple = 50000;
inline constexpr int kDefaultMaxPinTries = 3;
inline constexpr int kDefaultStatementDepth = 10;

/// Cardholder directory plus ledger. Every mutation is journaled before it
/// becomes visible; failed operations write nothing. Thread-safe: reads
/// share a lock, mutations are serialized.
class Vault {
public:
    explicit Vault(std::unique_ptr<JournalSink> journal, VaultOptions options = {});

    /// Rebuilds state from journal bytes, then appends to `journal`.
    static std::unique_ptr<Vault> restore(std::string_view journal_bytes, std::unique_ptr<JournalSink> journal,
                                          VaultOptions options = {});

    const CardRecord& enroll_cardholder(std::string_view pan, std::string_view pin,
                                        const minutiae::FingerprintTemplate& tmpl, Money opening_balance);

    PinCheck verify_pin(std::string_view pan, std::string_view candidate_pin, int max_tries = kDefaultMaxPinTries);

    void block(std::string_view pan);
    void unblock(std::string_view pan);

    TransactionRecord deposit(AccountId account, Money amount);
    TransactionRecord withdraw(AccountId account, Money amount, Money dispense_multiple = kDefaultDispenseMultiple);
    std::vector<TransactionRecord> statement(AccountId account, int n = kDefaultStatementDepth) const;

    Money balance(AccountId account) const;
    std::optional<CardRecord> card(std::string_view pan) const;
    std::optional<minutiae::FingerprintTemplate> enrolled_template(std::string_view pan) const;
    std::vector<CardRecord> cards() const;

    VaultState snapshot() const;

private:
    friend class DataDir;

    std::int64_t now() const;
    Account& account_ref(AccountId id);
    const Account& account_ref(AccountId id) const;
    CardRecord& card_ref(std::string_view pan);

    mutable std::shared_mutex mu_;
    std::unique_ptr<JournalSink> journal_;
    VaultOptions options_;
    VaultState state_;
};

/// Parses journal bytes into state. A final line that is incomplete or fails
/// its CRC is dropped; any other defect throws JournalCorrupt.
struct ReplayOutcome {
    VaultState state;
    std::size_t valid_length = 0;
    std::size_t dropped_bytes = 0;
};
ReplayOutcome replay(std::string_view journal_bytes);

/// Data directory holding `journal.log` and an exclusive `LOCK`.
class DataDir {
public:
    /// Takes the lock (throws JournalLocked when held elsewhere), replays the
    /// journal, truncates a torn tail, and opens it for durable appends.
    DataDir(const std::filesystem::path& dir, VaultOptions options = {});
    ~DataDir();
    DataDir(const DataDir&) = delete;
    DataDir& operator=(const DataDir&) = delete;

    Vault& vault() { return *vault_; }
    const std::filesystem::path& path() const { return dir_; }
    std::filesystem::path journal_path() const { return dir_ / "journal.log"; }
    std::size_t dropped_tail_bytes() const { return dropped_; }

private:
    std::filesystem::path dir_;
    int lock_fd_ = -1;
    std::size_t dropped_ = 0;
    std::unique_ptr<Vault> vault_;
};

} // namespace atm::vault
