#include "atm/minutiae.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace atm::minutiae {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

int position_key(int x, int y) { return x * (kFieldMax + 1) + y; }

std::string describe(const Minutia& m)
{
    std::ostringstream os;
    os << '(' << m.x << ',' << m.y << ',' << m.angle << ',' << kind_code(m.kind) << ')';
    return os.str();
}

bool parse_int(std::string_view s, int& out)
{
    if (s.empty())
        return false;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

std::string_view rstrip(std::string_view s)
{
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_spaces(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(' ', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return fields;
}

double circular_diff(double a, double b) { return std::abs(normalize_angle_diff(a - b)); }

} // namespace

FingerprintTemplate::FingerprintTemplate(std::vector<Minutia> minutiae, std::optional<std::string> subject_label)
    : minutiae_(std::move(minutiae)), label_(std::move(subject_label))
{
    if (minutiae_.empty())
        throw TemplateError("empty template");
    if (minutiae_.size() > kMaxMinutiae)
        throw TemplateError("template has " + std::to_string(minutiae_.size()) + " minutiae, limit is 200");

    std::unordered_set<int> seen;
    seen.reserve(minutiae_.size());
    for (const auto& m : minutiae_) {
        if (m.x < 0 || m.x > kFieldMax || m.y < 0 || m.y > kFieldMax)
            throw TemplateError("coordinate out of range: " + describe(m));
        if (m.angle < 0 || m.angle > 359)
            throw TemplateError("angle out of range: " + describe(m));
        if (m.kind != Kind::RidgeEnding && m.kind != Kind::Bifurcation)
            throw TemplateError("unknown minutia kind");
        if (!seen.insert(position_key(m.x, m.y)).second)
            throw TemplateError("duplicate coordinate: " + describe(m));
    }
}

char kind_code(Kind k) noexcept { return k == Kind::Bifurcation ? 'B' : 'E'; }

FingerprintTemplate parse_template(std::string_view text)
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    while (!lines.empty() && rstrip(lines.back()).empty())
        lines.pop_back();
    if (lines.empty())
        throw TemplateError("malformed header: empty input");

    const auto header = split_spaces(rstrip(lines.front()));
    int count = 0;
    if (header.size() != 3 || header[0] != "MINUTIAE" || header[1] != "v1" || !parse_int(header[2], count) || count < 0)
        throw TemplateError("malformed header: expected 'MINUTIAE v1 <count>'");
    if (count == 0)
        throw TemplateError("empty template");
    if (lines.size() - 1 != static_cast<std::size_t>(count))
        throw TemplateError("count mismatch: header says " + std::to_string(count) + ", found "
                            + std::to_string(lines.size() - 1) + " records");

    std::vector<Minutia> minutiae;
    minutiae.reserve(static_cast<std::size_t>(count));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_spaces(rstrip(lines[i]));
        Minutia m;
        if (fields.size() != 4 || !parse_int(fields[0], m.x) || !parse_int(fields[1], m.y)
            || !parse_int(fields[2], m.angle) || fields[3].size() != 1)
            throw TemplateError("malformed record on line " + std::to_string(i + 1));
        if (fields[3] == "E")
            m.kind = Kind::RidgeEnding;
        else if (fields[3] == "B")
            m.kind = Kind::Bifurcation;
        else
            throw TemplateError("unknown minutia kind on line " + std::to_string(i + 1));
        minutiae.push_back(m);
    }
    return FingerprintTemplate(std::move(minutiae));
}

std::string serialize_template(const FingerprintTemplate& t)
{
    std::string out = "MINUTIAE v1 " + std::to_string(t.size()) + "\n";
    for (const auto& m : t.minutiae()) {
        out += std::to_string(m.x);
        out += ' ';
        out += std::to_string(m.y);
        out += ' ';
        out += std::to_string(m.angle);
        out += ' ';
        out += kind_code(m.kind);
        out += '\n';
    }
    return out;
}

FingerprintTemplate load_template(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw TemplateError("cannot open template file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_template(buf.str());
}

void save_template(const std::filesystem::path& path, const FingerprintTemplate& t)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw TemplateError("cannot write template file " + path.string());
    out << serialize_template(t);
}

void resolve_collisions(std::vector<Minutia>& minutiae)
{
    std::unordered_set<int> occupied;
    occupied.reserve(minutiae.size());
    for (auto& m : minutiae) {
        if (occupied.insert(position_key(m.x, m.y)).second)
            continue;
        const int x0 = m.x;
        bool placed = false;
        for (int x = x0 + 1; x <= kFieldMax && !placed; ++x)
            placed = occupied.insert(position_key(x, m.y)).second ? (m.x = x, true) : false;
        for (int x = x0 - 1; x >= 0 && !placed; --x)
            placed = occupied.insert(position_key(x, m.y)).second ? (m.x = x, true) : false;
    }
}

FingerprintTemplate rigid_transform(const FingerprintTemplate& t, double theta_deg, int dx, int dy)
{
    const double c = std::cos(theta_deg * kDegToRad);
    const double s = std::sin(theta_deg * kDegToRad);
    const auto dtheta = static_cast<int>(std::lround(theta_deg));

    std::vector<Minutia> out;
    out.reserve(t.size());
    for (const auto& m : t.minutiae()) {
        const double rx = m.x - kFieldCenter;
        const double ry = m.y - kFieldCenter;
        const double x = kFieldCenter + rx * c - ry * s + dx;
        const double y = kFieldCenter + rx * s + ry * c + dy;
        Minutia r;
        r.x = std::clamp(static_cast<int>(std::lround(x)), 0, kFieldMax);
        r.y = std::clamp(static_cast<int>(std::lround(y)), 0, kFieldMax);
        r.angle = ((m.angle + dtheta) % 360 + 360) % 360;
        r.kind = m.kind;
        out.push_back(r);
    }
    resolve_collisions(out);
    return FingerprintTemplate(std::move(out), t.subject_label());
}

void MatchParams::validate() const
{
    if (!(dmax > 0.0))
        throw std::invalid_argument("dmax must be positive");
    if (!(atol > 0.0 && atol < 90.0))
        throw std::invalid_argument("atol must lie in (0, 90)");
    if (!(rot_limit >= 0.0 && rot_limit <= 180.0))
        throw std::invalid_argument("rot_limit must lie in [0, 180]");
}

double normalize_angle_diff(double deg) noexcept
{
    double d = std::fmod(deg, 360.0);
    if (d <= -180.0)
        d += 360.0;
    else if (d > 180.0)
        d -= 360.0;
    return d;
}

namespace {

/// Gallery minutiae bucketed into square cells of side dmax, so every
/// neighbor within dmax sits in the 3x3 block around a query cell.
class GalleryGrid {
public:
    GalleryGrid(std::span<const Minutia> gallery, double cell)
        : cell_(cell), dim_(static_cast<int>(std::floor(kFieldMax / cell)) + 1), buckets_(static_cast<std::size_t>(dim_ * dim_))
    {
        for (std::size_t i = 0; i < gallery.size(); ++i) {
            const int cx = static_cast<int>(gallery[i].x / cell_);
            const int cy = static_cast<int>(gallery[i].y / cell_);
            buckets_[static_cast<std::size_t>(cy * dim_ + cx)].push_back(static_cast<int>(i));
        }
    }

    template <typename Fn>
    void for_each_near(double x, double y, Fn&& fn) const
    {
        const int cx = static_cast<int>(std::floor(x / cell_));
        const int cy = static_cast<int>(std::floor(y / cell_));
        for (int gy = cy - 1; gy <= cy + 1; ++gy) {
            if (gy < 0 || gy >= dim_)
                continue;
            for (int gx = cx - 1; gx <= cx + 1; ++gx) {
                if (gx < 0 || gx >= dim_)
                    continue;
                for (int idx : buckets_[static_cast<std::size_t>(gy * dim_ + gx)])
                    fn(idx);
            }
        }
    }

private:
    double cell_;
    int dim_;
    std::vector<std::vector<int>> buckets_;
};

struct Candidate {
    double dist;
    int probe;
    int gallery;
};

} // namespace

MatchResult match_templates(const FingerprintTemplate& probe, const FingerprintTemplate& gallery,
                            const MatchParams& params)
{
    params.validate();
    const auto P = probe.minutiae();
    const auto G = gallery.minutiae();
    const double dmax2 = params.dmax * params.dmax;
    const int ceiling = static_cast<int>(std::min(P.size(), G.size()));

    GalleryGrid grid(G, params.dmax);
    std::vector<Candidate> candidates;
    std::vector<char> probe_used(P.size());
    std::vector<char> gallery_used(G.size());

    MatchResult best;
    for (std::size_t i = 0; i < P.size() && best.matched_count < ceiling; ++i) {
        for (std::size_t j = 0; j < G.size() && best.matched_count < ceiling; ++j) {
            const auto& anchor_p = P[i];
            const auto& anchor_g = G[j];
            if (anchor_p.kind != anchor_g.kind)
                continue;
            const double rot = normalize_angle_diff(static_cast<double>(anchor_g.angle - anchor_p.angle));
            if (std::abs(rot) > params.rot_limit)
                continue;

            const double c = std::cos(rot * kDegToRad);
            const double s = std::sin(rot * kDegToRad);
            const double tx = anchor_g.x - (anchor_p.x * c - anchor_p.y * s);
            const double ty = anchor_g.y - (anchor_p.x * s + anchor_p.y * c);

            candidates.clear();
            for (std::size_t k = 0; k < P.size(); ++k) {
                const auto& p = P[k];
                const double qx = p.x * c - p.y * s + tx;
                const double qy = p.x * s + p.y * c + ty;
                const double qa = p.angle + rot;
                grid.for_each_near(qx, qy, [&](int l) {
                    const auto& g = G[static_cast<std::size_t>(l)];
                    if (g.kind != p.kind)
                        return;
                    const double ex = qx - g.x;
                    const double ey = qy - g.y;
                    const double d2 = ex * ex + ey * ey;
                    if (d2 > dmax2 || circular_diff(qa, g.angle) > params.atol)
                        return;
                    candidates.push_back({std::sqrt(d2), static_cast<int>(k), l});
                });
            }
            std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
                if (a.dist != b.dist)
                    return a.dist < b.dist;
                if (a.probe != b.probe)
                    return a.probe < b.probe;
                return a.gallery < b.gallery;
            });

            std::fill(probe_used.begin(), probe_used.end(), 0);
            std::fill(gallery_used.begin(), gallery_used.end(), 0);
            int pairs = 0;
            for (const auto& cand : candidates) {
                auto& pu = probe_used[static_cast<std::size_t>(cand.probe)];
                auto& gu = gallery_used[static_cast<std::size_t>(cand.gallery)];
                if (pu || gu)
                    continue;
                pu = gu = 1;
                ++pairs;
            }

            if (pairs > best.matched_count) {
                best.matched_count = pairs;
                best.best_rotation_deg = rot;
                best.best_dx = tx;
                best.best_dy = ty;
            }
        }
    }
    best.score = 2.0 * best.matched_count / static_cast<double>(P.size() + G.size());
    return best;
}

bool decide(const MatchResult& result, double threshold)
{
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw std::invalid_argument("threshold must lie in [0, 1]");
    return result.score >= threshold;
}

} // namespace atm::minutiae
