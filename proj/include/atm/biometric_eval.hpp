#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atm/minutiae.hpp"

namespace atm::minutiae {

struct SyntheticConfig {
    std::uint64_t seed = 42;
    int n_subjects = 50;
    int samples_per_subject = 5;
    int minutiae_per_subject = 40;
    double position_jitter_sigma = 3.0;
    double angle_jitter_sigma = 5.0;
    double dropout_prob = 0.1;
    int spurious_count = 2;
    double rotation_range_deg = 30.0;
    int translation_range = 50;
    double min_separation = 24.0; // 2 x default dmax

    void validate() const;
};

struct Subject {
    std::string label;
    std::vector<FingerprintTemplate> samples;
};

using Population = std::vector<Subject>;

/// Deterministic in cfg.seed. Throws TemplateError when the base-template
/// separation constraint cannot be met within 10,000 rejection attempts.
Population synthesize_population(const SyntheticConfig& cfg);

/// Concatenated MINUTIAE v1 text of every sample, subject by subject.
std::string serialize_population(const Population& population);

struct RocRow {
    double threshold = 0.0;
    double far = 0.0;
    double frr = 0.0;
};

struct TrialScores {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

/// Genuine: every ordered within-subject pair of distinct samples.
/// Impostor: first sample of each subject against the first sample of
/// every other subject.
TrialScores score_trials(const Population& population, const MatchParams& params);

std::vector<RocRow> evaluate_far_frr(const Population& population, const MatchParams& params,
                                     const std::vector<double>& thresholds);

std::vector<RocRow> roc_from_scores(const TrialScores& scores, const std::vector<double>& thresholds);

/// 0.00, 0.05, ..., 1.00
std::vector<double> default_thresholds();

/// `threshold|FAR|FRR` lines.
std::string format_roc(const std::vector<RocRow>& rows);

} // namespace atm::minutiae
