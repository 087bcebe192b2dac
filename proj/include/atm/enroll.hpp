#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "atm/biometric_eval.hpp"
#include "atm/vault.hpp"

namespace atm::enroll {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidCard = 2;
inline constexpr int kExitDuplicate = 3;

inline constexpr vault::Money kDefaultSeedBalance = 10'000'000;

int cmd_enroll(const std::filesystem::path& data_dir, const std::string& pan, const std::string& pin,
               const std::filesystem::path& template_file, vault::Money opening_balance, std::ostream& out,
               std::ostream& err);

struct SeedOptions {
    std::uint64_t seed = 42;
    int n_subjects = 5;
    vault::Money opening_balance = kDefaultSeedBalance;
    int pin_iterations = 10000;
};

struct RosterEntry {
    std::string label;
    std::string pan;
    std::string pin;
    vault::AccountId account_id = 0;
    vault::Money opening_balance = 0;
};

/// Enrolls a synthetic population and writes every sample to
/// `data_dir/samples/<label>-<k>.min` (sample 0 is the enrolled template).
/// Journal contents depend only on the options.
std::vector<RosterEntry> seed_population(const std::filesystem::path& data_dir, const SeedOptions& options);

int cmd_seed(const std::filesystem::path& data_dir, const SeedOptions& options, std::ostream& out, std::ostream& err);

int cmd_block(const std::filesystem::path& data_dir, const std::string& pan, bool block, std::ostream& out,
              std::ostream& err);

int cmd_list(const std::filesystem::path& data_dir, std::ostream& out, std::ostream& err);

int cmd_eval(const minutiae::SyntheticConfig& config, const minutiae::MatchParams& params,
             const std::vector<double>& thresholds, std::ostream& out, std::ostream& err);

} // namespace atm::enroll
