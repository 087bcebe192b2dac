#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace atm::minutiae {

inline constexpr int kFieldMax = 1000;
inline constexpr int kFieldCenter = 500;
inline constexpr std::size_t kMaxMinutiae = 200;

enum class Kind : std::uint8_t { RidgeEnding = 0, Bifurcation = 1 };

struct Minutia {
    int x = 0;
    int y = 0;
    int angle = 0; // degrees, [0, 359]
    Kind kind = Kind::RidgeEnding;

    friend bool operator==(const Minutia&, const Minutia&) = default;
};

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Immutable, validated minutiae set: 1..200 in-range minutiae with
/// pairwise distinct positions. Equality ignores the label.
class FingerprintTemplate {
public:
    explicit FingerprintTemplate(std::vector<Minutia> minutiae,
                                 std::optional<std::string> subject_label = std::nullopt);

    std::span<const Minutia> minutiae() const noexcept { return minutiae_; }
    std::size_t size() const noexcept { return minutiae_.size(); }
    const std::optional<std::string>& subject_label() const noexcept { return label_; }

    friend bool operator==(const FingerprintTemplate& a, const FingerprintTemplate& b)
    {
        return a.minutiae_ == b.minutiae_;
    }

private:
    std::vector<Minutia> minutiae_;
    std::optional<std::string> label_;
};

// MINUTIAE v1 text format.
FingerprintTemplate parse_template(std::string_view text);
std::string serialize_template(const FingerprintTemplate& t);
FingerprintTemplate load_template(const std::filesystem::path& path);
void save_template(const std::filesystem::path& path, const FingerprintTemplate& t);

char kind_code(Kind k) noexcept;

/// Rotate by theta_deg about the field center, translate, round, clamp.
FingerprintTemplate rigid_transform(const FingerprintTemplate& t, double theta_deg, int dx, int dy);

/// Moves later duplicates off occupied positions (+1 in x, then -1 once
/// the field edge is reached). Order is preserved.
void resolve_collisions(std::vector<Minutia>& minutiae);

struct MatchParams {
    double dmax = 12.0;
    double atol = 20.0;
    double rot_limit = 45.0;

    void validate() const;
};

struct MatchResult {
    double score = 0.0;
    int matched_count = 0;
    double best_rotation_deg = 0.0;
    double best_dx = 0.0;
    double best_dy = 0.0;
};

/// Normalizes an angle difference to (-180, 180].
double normalize_angle_diff(double deg) noexcept;

/// Pair-hypothesis rigid alignment with greedy tolerant pairing.
///
/// Every same-kind (probe, gallery) pair whose angle difference lies within
/// rot_limit defines a rotation plus the translation that lands the probe
/// minutia on the gallery one. Under each hypothesis, candidate pairs within
/// dmax and atol are paired greedily by (distance, probe index, gallery
/// index). The score of M pairs is 2M / (|probe| + |gallery|); the first
/// hypothesis reaching the maximum wins.
MatchResult match_templates(const FingerprintTemplate& probe, const FingerprintTemplate& gallery,
                            const MatchParams& params = {});

bool decide(const MatchResult& result, double threshold);

} // namespace atm::minutiae
