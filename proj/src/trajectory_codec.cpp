#include "maskplan/trajectory_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"

namespace maskplan {

Vocabulary Vocabulary::build(double x_min, double x_max, int bins_x,
                             double y_min, double y_max, int bins_y) {
    if (!(x_max > x_min) || !(y_max > y_min))
        throw ConfigError("vocabulary: max must exceed min on each axis");
    if (bins_x < 2 || bins_y < 2)
        throw ConfigError("vocabulary: need at least 2 bins per axis");
    Vocabulary v;
    v.x_min_ = x_min;
    v.x_max_ = x_max;
    v.y_min_ = y_min;
    v.y_max_ = y_max;
    v.bins_x_ = bins_x;
    v.bins_y_ = bins_y;
    v.wx_ = (x_max - x_min) / bins_x;
    v.wy_ = (y_max - y_min) / bins_y;
    return v;
}

std::pair<int, int> Vocabulary::axis_range(int pos) const {
    if (pos % 2 == 0) return {0, bins_x_};
    return {bins_x_, coord_vocab()};
}

namespace {

int bin_index(double v, double lo, double hi, double w, int bins, bool clamp, const char* axis) {
    if (v < lo || v >= hi) {
        if (!clamp)
            throw RangeError(std::string("coordinate out of vocabulary range on ") + axis + " axis");
        return std::clamp(static_cast<int>(std::floor((v - lo) / w)), 0, bins - 1);
    }
    int idx = static_cast<int>(std::floor((v - lo) / w));
    return std::clamp(idx, 0, bins - 1);  // guard against fp edge at hi
}

}  // namespace

int32_t Vocabulary::x_token(double x, bool clamp) const {
    return static_cast<int32_t>(bin_index(x, x_min_, x_max_, wx_, bins_x_, clamp, "x"));
}

int32_t Vocabulary::y_token(double y, bool clamp) const {
    return static_cast<int32_t>(bins_x_ + bin_index(y, y_min_, y_max_, wy_, bins_y_, clamp, "y"));
}

double Vocabulary::x_center(int32_t tok) const {
    if (!is_x_token(tok)) throw ContractError("x_center: not an x token");
    return x_min_ + (tok + 0.5) * wx_;
}

double Vocabulary::y_center(int32_t tok) const {
    if (!is_y_token(tok)) throw ContractError("y_center: not a y token");
    return y_min_ + (tok - bins_x_ + 0.5) * wy_;
}

nlohmann::json Vocabulary::to_json() const {
    return {{"x_min", x_min_}, {"x_max", x_max_}, {"bins_x", bins_x_},
            {"y_min", y_min_}, {"y_max", y_max_}, {"bins_y", bins_y_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    return build(j.at("x_min").get<double>(), j.at("x_max").get<double>(),
                 j.at("bins_x").get<int>(), j.at("y_min").get<double>(),
                 j.at("y_max").get<double>(), j.at("bins_y").get<int>());
}

TokenSequence tokenize(const Trajectory& traj, const Vocabulary& v, bool clamp) {
    TokenSequence out;
    for (int k = 0; k < kWaypoints; ++k) {
        const Vec2& p = traj.points[k];
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw RangeError("tokenize: non-finite waypoint");
        out[2 * k] = v.x_token(p.x, clamp);
        out[2 * k + 1] = v.y_token(p.y, clamp);
    }
    return out;
}

Trajectory detokenize(const TokenSequence& x, const Vocabulary& v) {
    Trajectory t;
    for (int k = 0; k < kWaypoints; ++k) {
        int32_t tx = x[2 * k], ty = x[2 * k + 1];
        if (tx == v.mask_token() || ty == v.mask_token())
            throw IncompleteSequenceError("detokenize: mask token present");
        t.points[k] = {v.x_center(tx), v.y_center(ty)};
    }
    return t;
}

int count_masks(const TokenSequence& x, const Vocabulary& v) {
    int n = 0;
    for (int32_t t : x.tokens) n += (t == v.mask_token());
    return n;
}

TokenSequence all_masked(const Vocabulary& v) {
    TokenSequence x;
    x.tokens.fill(v.mask_token());
    return x;
}

std::array<double, kWaypoints> waypoint_headings(const Trajectory& traj) {
    std::array<double, kWaypoints> h{};
    double last = 0.0;
    for (int k = 0; k < kWaypoints; ++k) {
        int a = std::min(k, kWaypoints - 2);
        Vec2 seg = traj.points[a + 1] - traj.points[a];
        if (seg.norm() > 1e-9) last = std::atan2(seg.y, seg.x);
        h[k] = last;
    }
    return h;
}

}  // namespace maskplan
