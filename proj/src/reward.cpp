#include "maskplan/reward.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"

namespace maskplan {

nlohmann::json RewardWeights::to_json() const {
    return {{"w_ttc", w_ttc},
            {"w_comfort", w_comfort},
            {"w_ep", w_ep},
            {"ttc_threshold", ttc_threshold},
            {"ttc_step", ttc_step},
            {"max_accel", max_accel},
            {"max_jerk", max_jerk},
            {"ego_length", ego_length},
            {"ego_width", ego_width}};
}

RewardWeights RewardWeights::from_json(const nlohmann::json& j) {
    RewardWeights w;
    w.w_ttc = j.at("w_ttc").get<double>();
    w.w_comfort = j.at("w_comfort").get<double>();
    w.w_ep = j.at("w_ep").get<double>();
    w.ttc_threshold = j.at("ttc_threshold").get<double>();
    w.ttc_step = j.at("ttc_step").get<double>();
    w.max_accel = j.at("max_accel").get<double>();
    w.max_jerk = j.at("max_jerk").get<double>();
    w.ego_length = j.at("ego_length").get<double>();
    w.ego_width = j.at("ego_width").get<double>();
    return w;
}

namespace {

double nc_subscore(const Trajectory& traj, const Scene& scene, const RewardWeights& w) {
    if (scene.agents.empty()) return 1.0;
    auto headings = waypoint_headings(traj);
    for (int k = 0; k < kWaypoints; ++k) {
        OrientedRect ego{traj.points[k], headings[k], w.ego_length, w.ego_width};
        for (const auto& agent : scene.agents)
            if (rects_overlap(ego, agent.rect_at(k + 1))) return 0.0;
    }
    return 1.0;
}

double dac_subscore(const Trajectory& traj, const Scene& scene) {
    for (const auto& p : traj.points)
        if (!scene.grid.drivable_at_point(p)) return 0.0;
    return 1.0;
}

double comfort_subscore(const Trajectory& traj, const RewardWeights& w) {
    const double dt = traj.dt;
    std::array<Vec2, kWaypoints - 1> vel;
    for (int k = 0; k + 1 < kWaypoints; ++k)
        vel[k] = (traj.points[k + 1] - traj.points[k]) * (1.0 / dt);
    std::array<Vec2, kWaypoints - 2> acc;
    for (int k = 0; k + 2 < kWaypoints; ++k) {
        acc[k] = (vel[k + 1] - vel[k]) * (1.0 / dt);
        if (acc[k].norm() > w.max_accel) return 0.0;
    }
    for (int k = 0; k + 3 < kWaypoints; ++k) {
        Vec2 jerk = (acc[k + 1] - acc[k]) * (1.0 / dt);
        if (jerk.norm() > w.max_jerk) return 0.0;
    }
    return 1.0;
}

double ep_subscore(const Trajectory& traj, const Scene& scene) {
    // Progress along the expert polyline (ego origin prepended), best over
    // all waypoints, ratio-clamped.
    std::vector<Vec2> route;
    route.push_back({0.0, 0.0});
    for (const auto& p : scene.expert.points) route.push_back(p);
    std::vector<double> arcs = arc_lengths(route);
    double total = arcs.back();
    if (total <= 1e-9) return 1.0;  // degenerate expert: vacuous progress
    double best = 0.0;
    for (const auto& p : traj.points)
        best = std::max(best, project_arc(route, arcs, p));
    return std::clamp(best / total, 0.0, 1.0);
}

}  // namespace

double ttc_subscore(const Trajectory& traj, const Scene& scene, double threshold,
                    const RewardWeights& w) {
    if (scene.agents.empty()) return 1.0;
    const double dt = traj.dt;
    auto headings = waypoint_headings(traj);
    for (int k = 0; k < kWaypoints; ++k) {
        Vec2 p = traj.points[k];
        int seg = std::min(k, kWaypoints - 2);
        Vec2 v_ego = (traj.points[seg + 1] - traj.points[seg]) * (1.0 / dt);
        for (const auto& agent : scene.agents) {
            Pose ap = agent.pose_at(k + 1);
            Vec2 v_agent = agent.velocity_at(k + 1, dt);
            for (double tau = 0.0; tau <= threshold; tau += w.ttc_step) {
                OrientedRect ego{p + v_ego * tau, headings[k], w.ego_length, w.ego_width};
                OrientedRect other{ap.position() + v_agent * tau, ap.yaw, agent.length,
                                   agent.width};
                if (rects_overlap(ego, other)) return 0.0;
            }
        }
    }
    return 1.0;
}

double aggregate_score(const RewardBreakdown& parts, const RewardWeights& w) {
    double denom = w.w_ttc + w.w_comfort + w.w_ep;
    double graded = (w.w_ttc * parts.ttc + w.w_comfort * parts.comfort + w.w_ep * parts.ep) / denom;
    return 100.0 * parts.nc * parts.dac * graded;
}

RewardBreakdown score(const Trajectory& traj, const Scene& scene, const RewardWeights& w) {
    if (std::abs(traj.dt - scene.expert.dt) > 1e-9)
        throw ContractError("score: trajectory timestep does not match the scene");
    for (const auto& p : traj.points)
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw ContractError("score: non-finite waypoint");
    RewardBreakdown r;
    r.nc = nc_subscore(traj, scene, w);
    r.dac = dac_subscore(traj, scene);
    r.ttc = ttc_subscore(traj, scene, w.ttc_threshold, w);
    r.comfort = comfort_subscore(traj, w);
    r.ep = ep_subscore(traj, scene);
    r.aggregate = aggregate_score(r, w);
    return r;
}

}  // namespace maskplan
