#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "atm/enroll.hpp"

using namespace atm;

namespace {

std::vector<double> parse_thresholds(const std::string& csv)
{
    std::vector<double> out;
    std::stringstream ss(csv);
    for (std::string item; std::getline(ss, item, ',');)
        out.push_back(std::stod(item));
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ATM cardholder enrollment (run with the switch stopped)"};
    app.require_subcommand(1);

    std::string data_dir = "data";
    std::string pan;
    std::string pin;
    std::string template_file;
    vault::Money opening = 0;

    auto* add = app.add_subcommand("add", "enroll one cardholder");
    add->add_option("--data-dir", data_dir);
    add->add_option("--pan", pan)->required();
    add->add_option("--pin", pin)->required();
    add->add_option("--template", template_file, "MINUTIAE v1 file")->required();
    add->add_option("--opening-balance", opening, "minor units");

    enroll::SeedOptions seed_opts;
    auto* seed = app.add_subcommand("seed", "enroll a deterministic demo population");
    seed->add_option("--data-dir", data_dir);
    seed->add_option("--seed", seed_opts.seed);
    seed->add_option("--subjects", seed_opts.n_subjects);
    seed->add_option("--opening-balance", seed_opts.opening_balance, "minor units");

    auto* block = app.add_subcommand("block", "block a card");
    block->add_option("--data-dir", data_dir);
    block->add_option("--pan", pan)->required();
    auto* unblock = app.add_subcommand("unblock", "unblock a card and reset its PIN counter");
    unblock->add_option("--data-dir", data_dir);
    unblock->add_option("--pan", pan)->required();

    auto* list = app.add_subcommand("list", "list cards");
    list->add_option("--data-dir", data_dir);

    minutiae::SyntheticConfig cfg;
    minutiae::MatchParams params;
    std::string thresholds;
    auto* eval = app.add_subcommand("eval", "FAR/FRR table over a synthetic population");
    eval->add_option("--seed", cfg.seed);
    eval->add_option("--subjects", cfg.n_subjects);
    eval->add_option("--samples", cfg.samples_per_subject);
    eval->add_option("--minutiae", cfg.minutiae_per_subject);
    eval->add_option("--position-sigma", cfg.position_jitter_sigma);
    eval->add_option("--angle-sigma", cfg.angle_jitter_sigma);
    eval->add_option("--dropout", cfg.dropout_prob);
    eval->add_option("--spurious", cfg.spurious_count);
    eval->add_option("--rotation-range", cfg.rotation_range_deg);
    eval->add_option("--translation-range", cfg.translation_range);
    eval->add_option("--min-separation", cfg.min_separation);
    eval->add_option("--dmax", params.dmax);
    eval->add_option("--atol", params.atol);
    eval->add_option("--rot-limit", params.rot_limit);
    eval->add_option("--thresholds", thresholds, "comma-separated, ascending");

    CLI11_PARSE(app, argc, argv);

    if (*add)
        return enroll::cmd_enroll(data_dir, pan, pin, template_file, opening, std::cout, std::cerr);
    if (*seed)
        return enroll::cmd_seed(data_dir, seed_opts, std::cout, std::cerr);
    if (*block || *unblock)
        return enroll::cmd_block(data_dir, pan, static_cast<bool>(*block), std::cout, std::cerr);
    if (*list)
        return enroll::cmd_list(data_dir, std::cout, std::cerr);

    std::vector<double> ts;
    try {
        ts = thresholds.empty() ? minutiae::default_thresholds() : parse_thresholds(thresholds);
    } catch (const std::exception&) {
        std::cerr << "enroll: bad --thresholds\n";
        return enroll::kExitFailure;
    }
    return enroll::cmd_eval(cfg, params, ts, std::cout, std::cerr);
}
