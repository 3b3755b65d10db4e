#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include <nlohmann/json_fwd.hpp>

#include "maskplan/geometry.hpp"

namespace maskplan {

// Fixed plan geometry: 8 waypoints interleaved as [x1,y1,...,x8,y8].
inline constexpr int kWaypoints = 8;
inline constexpr int kActionLen = 2 * kWaypoints;
inline constexpr int kGoalX = kActionLen - 2;
inline constexpr int kGoalY = kActionLen - 1;

struct Trajectory {
    std::array<Vec2, kWaypoints> points{};
    double dt = 0.5;  // seconds between waypoints

    bool operator==(const Trajectory&) const = default;
};

struct TokenSequence {
    std::array<int32_t, kActionLen> tokens{};

    bool operator==(const TokenSequence&) const = default;
    int32_t& operator[](int i) { return tokens[i]; }
    int32_t operator[](int i) const { return tokens[i]; }
};

// Discrete coordinate alphabet over a uniform BEV lattice.
//
// Token-id layout: x tokens occupy [0, bins_x), y tokens occupy
// [bins_x, bins_x + bins_y), and the mask token is bins_x + bins_y. Bin edges
// follow the half-open convention [k*w, (k+1)*w), so a coordinate exactly on
// an edge lands in the higher bin.
class Vocabulary {
public:
    static Vocabulary build(double x_min, double x_max, int bins_x,
                            double y_min, double y_max, int bins_y);

    int bins_x() const { return bins_x_; }
    int bins_y() const { return bins_y_; }
    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    double y_min() const { return y_min_; }
    double y_max() const { return y_max_; }
    double bin_width_x() const { return wx_; }
    double bin_width_y() const { return wy_; }

    // Size of the predictable coordinate alphabet (x bins + y bins).
    int coord_vocab() const { return bins_x_ + bins_y_; }
    int32_t mask_token() const { return static_cast<int32_t>(coord_vocab()); }
    // Alphabet size including the mask token (embedding-table rows).
    int total_tokens() const { return coord_vocab() + 1; }

    bool is_x_token(int32_t t) const { return t >= 0 && t < bins_x_; }
    bool is_y_token(int32_t t) const { return t >= bins_x_ && t < coord_vocab(); }
    bool is_coord_token(int32_t t) const { return t >= 0 && t < coord_vocab(); }

    // Valid token-id range for an action position: even positions hold x
    // tokens, odd positions hold y tokens. Returned as [begin, end).
    std::pair<int, int> axis_range(int pos) const;

    int32_t x_token(double x, bool clamp) const;
    int32_t y_token(double y, bool clamp) const;
    double x_center(int32_t tok) const;
    double y_center(int32_t tok) const;

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

    bool operator==(const Vocabulary&) const = default;

private:
    double x_min_ = 0, x_max_ = 0, y_min_ = 0, y_max_ = 0;
    int bins_x_ = 0, bins_y_ = 0;
    double wx_ = 0, wy_ = 0;
};

// Interleaves the 8 waypoints into 16 coordinate tokens. With clamp=false an
// out-of-range waypoint throws RangeError; with clamp=true it is clamped into
// the edge bin (training-data generation path).
TokenSequence tokenize(const Trajectory& traj, const Vocabulary& v, bool clamp = false);

// Maps every token to its bin center. Throws IncompleteSequenceError if any
// mask token is present, ContractError on an axis-mismatched token.
Trajectory detokenize(const TokenSequence& x, const Vocabulary& v);

int count_masks(const TokenSequence& x, const Vocabulary& v);
TokenSequence all_masked(const Vocabulary& v);

// Per-waypoint heading derived from consecutive waypoints (segment k -> k+1;
// the last waypoint reuses the previous segment, degenerate segments reuse the
// last valid heading).
std::array<double, kWaypoints> waypoint_headings(const Trajectory& traj);

}  // namespace maskplan
