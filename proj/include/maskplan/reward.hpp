#pragma once

#include <nlohmann/json_fwd.hpp>

#include "maskplan/scene_sim.hpp"
#include "maskplan/trajectory_codec.hpp"

namespace maskplan {

// Closed-loop scoring weights. Aggregate score is
//   100 * nc * dac * (w_ttc*ttc + w_comfort*comfort + w_ep*ep) / (w_ttc+w_comfort+w_ep),
// i.e. the collision and drivable-area gates multiply a convex combination of
// the graded subscores. Every constant lives here, not in the scorer body.
struct RewardWeights {
    double w_ttc = 5.0;
    double w_comfort = 2.0;
    double w_ep = 5.0;
    double ttc_threshold = 1.0;  // seconds
    double ttc_step = 0.005;     // constant-velocity projection step, seconds
    double max_accel = 3.0;      // m/s^2
    double max_jerk = 5.0;       // m/s^3
    double ego_length = 4.5;
    double ego_width = 2.0;

    nlohmann::json to_json() const;
    static RewardWeights from_json(const nlohmann::json& j);
};

struct RewardBreakdown {
    double nc = 0.0;
    double dac = 0.0;
    double ttc = 0.0;
    double comfort = 0.0;
    double ep = 0.0;
    double aggregate = 0.0;  // [0, 100]
};

RewardBreakdown score(const Trajectory& traj, const Scene& scene,
                      const RewardWeights& w = RewardWeights{});

// Binary threshold on the minimum projected time-to-overlap under
// constant-velocity extrapolation from every waypoint.
double ttc_subscore(const Trajectory& traj, const Scene& scene, double threshold,
                    const RewardWeights& w = RewardWeights{});

double aggregate_score(const RewardBreakdown& parts, const RewardWeights& w);

}  // namespace maskplan
