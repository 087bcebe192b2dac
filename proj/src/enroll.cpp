#include "atm/enroll.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "atm/rng.hpp"

namespace atm::enroll {

namespace {

// Seeded journals carry this timestamp on every line so that two runs with
// the same options are byte-identical.
constexpr std::int64_t kSeedEpochMs = 1'700'000'000'000;

std::string format_money(vault::Money minor)
{
    return std::to_string(minor);
}

int report_vault_error(const vault::VaultError& e, std::ostream& err)
{
    switch (e.kind()) {
    case vault::VaultErrorKind::InvalidPan:
        err << "invalid card number: " << e.what() << '\n';
        return kExitInvalidCard;
    case vault::VaultErrorKind::DuplicatePan:
        err << "duplicate card: " << e.what() << '\n';
        return kExitDuplicate;
    default:
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

} // namespace

int cmd_enroll(const std::filesystem::path& data_dir, const std::string& pan, const std::string& pin,
               const std::filesystem::path& template_file, vault::Money opening_balance, std::ostream& out,
               std::ostream& err)
{
    try {
        const auto tmpl = minutiae::load_template(template_file);
        vault::DataDir dir(data_dir);
        const auto& card = dir.vault().enroll_cardholder(pan, pin, tmpl, opening_balance);
        out << "enrolled " << card.pan << " account " << card.account_id << " balance "
            << format_money(opening_balance) << '\n';
        return kExitOk;
    } catch (const vault::VaultError& e) {
        return report_vault_error(e, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

std::vector<RosterEntry> seed_population(const std::filesystem::path& data_dir, const SeedOptions& options)
{
    if (options.n_subjects < 1)
        throw std::invalid_argument("n_subjects must be at least 1");
    std::filesystem::create_directories(data_dir);
    const auto journal = data_dir / "journal.log";
    if (std::filesystem::exists(journal) && std::filesystem::file_size(journal) > 0)
        throw std::runtime_error("data directory " + data_dir.string() + " already holds a journal");

    minutiae::SyntheticConfig cfg;
    cfg.seed = options.seed;
    cfg.n_subjects = options.n_subjects;
    const auto population = minutiae::synthesize_population(cfg);

    // Credentials and salts come from their own stream so that they do not
    // shift when the population generator changes.
    auto rng = std::make_shared<DeterministicRng>(options.seed ^ 0x9e3779b97f4a7c15ULL);
    vault::VaultOptions vopts;
    vopts.pin_iterations = options.pin_iterations;
    vopts.clock = [] { return kSeedEpochMs; };
    vopts.salt_source = [rng] {
        std::array<std::uint8_t, 16> salt{};
        for (auto& b : salt)
            b = static_cast<std::uint8_t>(rng->uniform_int(0, 255));
        return salt;
    };
    vault::DataDir dir(data_dir, vopts);

    const auto samples_dir = data_dir / "samples";
    std::filesystem::create_directories(samples_dir);

    std::vector<RosterEntry> roster;
    std::set<std::string> used;
    for (const auto& subject : population) {
        std::string pan;
        do {
            pan = "5061";
            for (int i = 0; i < 11; ++i)
                pan.push_back(static_cast<char>('0' + rng->uniform_int(0, 9)));
            pan.push_back(vault::luhn_check_digit(pan));
        } while (!used.insert(pan).second);
        std::string pin;
        for (int i = 0; i < 4; ++i)
            pin.push_back(static_cast<char>('0' + rng->uniform_int(0, 9)));

        const auto& card = dir.vault().enroll_cardholder(pan, pin, subject.samples.front(), options.opening_balance);
        for (std::size_t k = 0; k < subject.samples.size(); ++k)
            minutiae::save_template(samples_dir / (subject.label + "-" + std::to_string(k) + ".min"),
                                    subject.samples[k]);
        roster.push_back({subject.label, pan, pin, card.account_id, options.opening_balance});
    }
    return roster;
}

int cmd_seed(const std::filesystem::path& data_dir, const SeedOptions& options, std::ostream& out, std::ostream& err)
{
    std::vector<RosterEntry> roster;
    try {
        roster = seed_population(data_dir, options);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    err << "WARNING: demo roster below prints PINs in clear. Do not use these credentials outside a demo.\n";
    out << "label|pan|pin|account_id|opening_balance|enrolled_sample\n";
    for (const auto& r : roster)
        out << r.label << '|' << r.pan << '|' << r.pin << '|' << r.account_id << '|' << format_money(r.opening_balance)
            << '|' << r.label << "-0\n";
    return kExitOk;
}

int cmd_block(const std::filesystem::path& data_dir, const std::string& pan, bool block, std::ostream& out,
              std::ostream& err)
{
    try {
        vault::DataDir dir(data_dir);
        if (block)
            dir.vault().block(pan);
        else
            dir.vault().unblock(pan);
        out << (block ? "blocked " : "unblocked ") << pan << '\n';
        return kExitOk;
    } catch (const vault::VaultError& e) {
        return report_vault_error(e, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int cmd_list(const std::filesystem::path& data_dir, std::ostream& out, std::ostream& err)
{
    try {
        vault::DataDir dir(data_dir);
        out << "pan|account_id|status|failed_pin_attempts|balance\n";
        for (const auto& card : dir.vault().cards())
            out << card.pan << '|' << card.account_id << '|'
                << (card.status == vault::CardStatus::Active ? "Active" : "Blocked") << '|'
                << card.failed_pin_attempts << '|' << format_money(dir.vault().balance(card.account_id)) << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int cmd_eval(const minutiae::SyntheticConfig& config, const minutiae::MatchParams& params,
             const std::vector<double>& thresholds, std::ostream& out, std::ostream& err)
{
    try {
        config.validate();
        params.validate();
        const auto population = minutiae::synthesize_population(config);
        out << minutiae::format_roc(minutiae::evaluate_far_frr(population, params, thresholds));
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

} // namespace atm::enroll
