#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskplan/geometry.hpp"
#include "maskplan/trajectory_codec.hpp"

namespace maskplan {

enum class Instruction : int { KeepLane = 0, TurnLeft = 1, TurnRight = 2, Straight = 3 };

struct BevGrid {
    int height = 0;             // rows, y axis
    int width = 0;              // cols, x axis
    double resolution = 0.5;    // meters per cell
    Vec2 origin{0.0, 0.0};      // ego-frame coords of the (0,0) cell corner
    std::vector<uint8_t> drivable;  // row-major H*W, 1 = drivable

    uint8_t at(int iy, int ix) const { return drivable[iy * width + ix]; }
    uint8_t& at(int iy, int ix) { return drivable[iy * width + ix]; }
    bool in_bounds(int iy, int ix) const {
        return iy >= 0 && iy < height && ix >= 0 && ix < width;
    }
    Vec2 cell_center(int iy, int ix) const {
        return {origin.x + (ix + 0.5) * resolution, origin.y + (iy + 0.5) * resolution};
    }
    // Cell containing p; false if p is outside the grid.
    bool cell_of(Vec2 p, int& iy, int& ix) const;
    bool drivable_at_point(Vec2 p) const;
};

struct Agent {
    double length = 4.5;
    double width = 2.0;
    std::vector<Pose> states;  // one per timestep, index 0 = scene start

    // Pose/velocity at timestep k, holding the last segment beyond the end.
    Pose pose_at(int k) const;
    Vec2 velocity_at(int k, double dt) const;
    OrientedRect rect_at(int k) const;
};

struct EgoState {
    double speed = 0.0;     // m/s
    double accel = 0.0;     // m/s^2
    double yaw_rate = 0.0;  // rad/s
};

struct Scene {
    BevGrid grid;
    std::vector<Agent> agents;
    Instruction instruction = Instruction::KeepLane;
    EgoState ego;
    Trajectory expert;
    uint64_t seed = 0;
};

struct SceneConfig {
    int grid_height = 64;
    int grid_width = 128;
    double resolution = 0.5;
    double x_min = 0.0;
    double y_min = -16.0;
    int min_agents = 0;
    int max_agents = 3;
    double half_width_min = 2.2;
    double half_width_max = 3.2;
    double speed_min = 2.0;
    double speed_max = 8.0;
    double turn_speed_min = 3.5;
    double turn_speed_max = 6.0;
    double curvature_min = 0.03;   // turn scenes, 1/m
    double curvature_max = 0.045;
    double keep_lane_curvature = 0.008;
    double fork_prob = 0.45;       // distractor corridor probability
    int agent_state_steps = kWaypoints + 2;
    int max_attempts = 20;

    nlohmann::json to_json() const;
    static SceneConfig from_json(const nlohmann::json& j);
};

// Deterministic for a fixed (seed, cfg). `attempts_out`, when non-null,
// receives the number of attempts the generator needed.
Scene generate_scene(uint64_t seed, const SceneConfig& cfg, int* attempts_out = nullptr);

// r_dac-scaled exact Euclidean distance (in cells) to the nearest drivable
// cell; zero on drivable cells. Row-major H*W.
std::vector<double> outside_distance(const BevGrid& grid, double r_dac);

struct CostField {
    int height = 0;
    int width = 0;
    std::vector<double> cost;  // row-major, non-negative
    double r_dac = 1.0;
    double eps_safe = 0.0;

    double at(int iy, int ix) const { return cost[iy * width + ix]; }
};

// max(0, d_out - eps_safe) pointwise. eps_safe < 0 is a configuration error.
CostField dac_cost_field(const BevGrid& grid, double r_dac, double eps_safe);

// Prompt raster: 3 channels (drivable, agent occupancy at timestep 0, agent
// occupancy at timestep 1), each H*W row-major, concatenated.
std::vector<double> raster_channels(const Scene& scene);

// ---- Corpus I/O ----------------------------------------------------------
//
// JSON-lines file: a header object, then one object per scene. The grid is
// run-length encoded; every scene carries its seed so corpora can be
// re-derived from the header config alone.

struct CorpusHeader {
    int version = 1;
    SceneConfig config;
    uint64_t base_seed = 0;
    int count = 0;
    int train_count = 0;
    int test_count = 0;
    uint64_t config_hash = 0;
};

void write_corpus(const std::string& path, const CorpusHeader& header,
                  const std::vector<Scene>& scenes);
std::vector<Scene> read_corpus(const std::string& path, CorpusHeader* header_out = nullptr);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

// ---- Scripted clips for alternating-step evaluation -----------------------
//
// A clip is a sequence of per-frame ego-centric scenes sampled along one long
// world-frame route, plus the world-frame ego pose at each frame. Frame f+1
// is dt seconds after frame f; the ego follows the route (scripted, not
// closed-loop).

struct Clip {
    std::vector<Scene> frames;
    std::vector<Pose> ego_poses;  // world frame, one per frame
    double dt = 0.5;
};

Clip generate_clip(uint64_t seed, const SceneConfig& cfg, int n_frames);

// Relative motion of frame f+1's ego pose expressed in frame f's ego frame.
struct EgoMotion {
    Vec2 translation;  // previous-frame coordinates
    double yaw = 0.0;
};
EgoMotion relative_motion(const Pose& from, const Pose& to);

}  // namespace maskplan
