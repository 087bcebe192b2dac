#include "atm/biometric_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "atm/rng.hpp"

namespace atm::minutiae {

namespace {

constexpr int kBaseLo = 100;
constexpr int kBaseHi = 900;
constexpr int kMaxRejections = 10000;

Kind random_kind(DeterministicRng& rng) { return rng.bernoulli(0.5) ? Kind::Bifurcation : Kind::RidgeEnding; }

std::vector<Minutia> base_minutiae(const SyntheticConfig& cfg, DeterministicRng& rng)
{
    std::vector<Minutia> base;
    base.reserve(static_cast<std::size_t>(cfg.minutiae_per_subject));
    const double sep2 = cfg.min_separation * cfg.min_separation;
    while (base.size() < static_cast<std::size_t>(cfg.minutiae_per_subject)) {
        int attempts = 0;
        while (true) {
            if (++attempts > kMaxRejections)
                throw TemplateError("infeasible separation constraint: could not place minutia "
                                    + std::to_string(base.size() + 1) + " after 10000 attempts");
            const auto x = static_cast<int>(rng.uniform_int(kBaseLo, kBaseHi));
            const auto y = static_cast<int>(rng.uniform_int(kBaseLo, kBaseHi));
            const bool clear = std::none_of(base.begin(), base.end(), [&](const Minutia& m) {
                const double dx = m.x - x;
                const double dy = m.y - y;
                return dx * dx + dy * dy < sep2;
            });
            if (clear) {
                Minutia m;
                m.x = x;
                m.y = y;
                m.angle = static_cast<int>(rng.uniform_int(0, 359));
                m.kind = random_kind(rng);
                base.push_back(m);
                break;
            }
        }
    }
    return base;
}

std::vector<Minutia> noisy_sample(const SyntheticConfig& cfg, const std::vector<Minutia>& base, DeterministicRng& rng)
{
    const double theta = rng.uniform_real(-cfg.rotation_range_deg, cfg.rotation_range_deg);
    const auto dx = rng.uniform_int(-cfg.translation_range, cfg.translation_range);
    const auto dy = rng.uniform_int(-cfg.translation_range, cfg.translation_range);
    const double c = std::cos(theta * std::numbers::pi / 180.0);
    const double s = std::sin(theta * std::numbers::pi / 180.0);

    std::vector<Minutia> out;
    out.reserve(base.size() + static_cast<std::size_t>(cfg.spurious_count));
    for (const auto& m : base) {
        if (rng.bernoulli(cfg.dropout_prob))
            continue;
        const double rx = m.x - kFieldCenter;
        const double ry = m.y - kFieldCenter;
        const double x = kFieldCenter + rx * c - ry * s + static_cast<double>(dx) + rng.gaussian(cfg.position_jitter_sigma);
        const double y = kFieldCenter + rx * s + ry * c + static_cast<double>(dy) + rng.gaussian(cfg.position_jitter_sigma);
        const double a = m.angle + theta + rng.gaussian(cfg.angle_jitter_sigma);
        Minutia n;
        n.x = std::clamp(static_cast<int>(std::lround(x)), 0, kFieldMax);
        n.y = std::clamp(static_cast<int>(std::lround(y)), 0, kFieldMax);
        n.angle = ((static_cast<int>(std::lround(a)) % 360) + 360) % 360;
        n.kind = m.kind;
        out.push_back(n);
    }
    for (int i = 0; i < cfg.spurious_count; ++i) {
        Minutia n;
        n.x = static_cast<int>(rng.uniform_int(0, kFieldMax));
        n.y = static_cast<int>(rng.uniform_int(0, kFieldMax));
        n.angle = static_cast<int>(rng.uniform_int(0, 359));
        n.kind = random_kind(rng);
        out.push_back(n);
    }
    resolve_collisions(out);
    return out;
}

} // namespace

void SyntheticConfig::validate() const
{
    auto fail = [](const char* what) { throw std::invalid_argument(what); };
    if (n_subjects < 1)
        fail("n_subjects must be at least 1");
    if (samples_per_subject < 1)
        fail("samples_per_subject must be at least 1");
    if (minutiae_per_subject < 1)
        fail("minutiae_per_subject must be at least 1");
    if (spurious_count < 0)
        fail("spurious_count must be non-negative");
    if (static_cast<std::size_t>(minutiae_per_subject + spurious_count) > kMaxMinutiae)
        fail("minutiae_per_subject + spurious_count exceeds 200");
    if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0))
        fail("dropout_prob must lie in [0, 1]");
    if (!(position_jitter_sigma >= 0.0) || !(angle_jitter_sigma >= 0.0))
        fail("jitter sigmas must be non-negative");
    if (!(rotation_range_deg >= 0.0) || translation_range < 0)
        fail("rotation and translation ranges must be non-negative");
    if (!(min_separation >= 0.0))
        fail("min_separation must be non-negative");
}

Population synthesize_population(const SyntheticConfig& cfg)
{
    cfg.validate();
    DeterministicRng rng(cfg.seed);
    Population population;
    population.reserve(static_cast<std::size_t>(cfg.n_subjects));
    for (int s = 0; s < cfg.n_subjects; ++s) {
        char label[16];
        std::snprintf(label, sizeof label, "S%03d", s);
        Subject subject{label, {}};
        const auto base = base_minutiae(cfg, rng);
        for (int k = 0; k < cfg.samples_per_subject; ++k)
            subject.samples.emplace_back(noisy_sample(cfg, base, rng), subject.label);
        population.push_back(std::move(subject));
    }
    return population;
}

std::string serialize_population(const Population& population)
{
    std::string out;
    for (const auto& subject : population)
        for (const auto& t : subject.samples)
            out += serialize_template(t);
    return out;
}

TrialScores score_trials(const Population& population, const MatchParams& params)
{
    params.validate();
    if (population.size() < 2)
        throw std::invalid_argument("evaluation needs at least 2 subjects");
    TrialScores scores;
    for (const auto& subject : population) {
        const auto& samples = subject.samples;
        for (std::size_t i = 0; i < samples.size(); ++i)
            for (std::size_t j = 0; j < samples.size(); ++j)
                if (i != j)
                    scores.genuine.push_back(match_templates(samples[i], samples[j], params).score);
    }
    for (std::size_t a = 0; a < population.size(); ++a)
        for (std::size_t b = 0; b < population.size(); ++b)
            if (a != b)
                scores.impostor.push_back(
                    match_templates(population[a].samples.front(), population[b].samples.front(), params).score);
    return scores;
}

std::vector<RocRow> roc_from_scores(const TrialScores& scores, const std::vector<double>& thresholds)
{
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0))
            throw std::invalid_argument("thresholds must lie in [0, 1]");
        if (i > 0 && thresholds[i] < thresholds[i - 1])
            throw std::invalid_argument("thresholds must be ascending");
    }
    auto rate = [](const std::vector<double>& v, auto pred) {
        if (v.empty())
            return 0.0;
        const auto n = std::count_if(v.begin(), v.end(), pred);
        return static_cast<double>(n) / static_cast<double>(v.size());
    };
    std::vector<RocRow> rows;
    rows.reserve(thresholds.size());
    for (double tau : thresholds) {
        RocRow row;
        row.threshold = tau;
        row.far = rate(scores.impostor, [tau](double s) { return s >= tau; });
        row.frr = rate(scores.genuine, [tau](double s) { return s < tau; });
        rows.push_back(row);
    }
    return rows;
}

std::vector<RocRow> evaluate_far_frr(const Population& population, const MatchParams& params,
                                     const std::vector<double>& thresholds)
{
    if (population.size() < 2)
        throw std::invalid_argument("evaluation needs at least 2 subjects");
    // Validate thresholds before the expensive scoring pass.
    roc_from_scores({}, thresholds);
    return roc_from_scores(score_trials(population, params), thresholds);
}

std::vector<double> default_thresholds()
{
    std::vector<double> t;
    for (int i = 0; i <= 20; ++i)
        t.push_back(i / 20.0);
    return t;
}

std::string format_roc(const std::vector<RocRow>& rows)
{
    std::string out;
    char line[96];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%.3f|%.6f|%.6f\n", r.threshold, r.far, r.frr);
        out += line;
    }
    return out;
}

} // namespace atm::minutiae
