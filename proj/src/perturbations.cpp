#include "maskplan/perturbations.hpp"

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"

namespace maskplan {

void PerturbationConfig::validate() const {
    if (!(beta_min > 0.0) || !(beta_max >= beta_min))
        throw ConfigError("perturbation: need 0 < beta_min <= beta_max");
    if (alpha_max < 0.0) throw ConfigError("perturbation: alpha_max must be >= 0");
    if (w_longitudinal < 0.0 || w_lateral < 0.0 || w_longitudinal + w_lateral <= 0.0)
        throw ConfigError("perturbation: invalid family mix weights");
}

nlohmann::json PerturbationConfig::to_json() const {
    return {{"beta_min", beta_min},
            {"beta_max", beta_max},
            {"alpha_max", alpha_max},
            {"w_longitudinal", w_longitudinal},
            {"w_lateral", w_lateral}};
}

PerturbationConfig PerturbationConfig::from_json(const nlohmann::json& j) {
    PerturbationConfig c;
    c.beta_min = j.at("beta_min").get<double>();
    c.beta_max = j.at("beta_max").get<double>();
    c.alpha_max = j.at("alpha_max").get<double>();
    c.w_longitudinal = j.at("w_longitudinal").get<double>();
    c.w_lateral = j.at("w_lateral").get<double>();
    c.validate();
    return c;
}

Trajectory perturb_longitudinal(const Trajectory& traj, double beta) {
    if (!(beta > 0.0)) throw RangeError("perturb_longitudinal: beta must be > 0");
    // The plan starts at the ego origin; include it so progress scaling moves
    // the first waypoint too.
    std::vector<Vec2> pts;
    pts.reserve(kWaypoints + 1);
    pts.push_back({0.0, 0.0});
    for (const auto& p : traj.points) pts.push_back(p);
    std::vector<double> arcs = arc_lengths(pts);
    if (arcs.back() <= 0.0)
        throw DegenerateInputError("perturb_longitudinal: zero-length trajectory");

    Trajectory out = traj;
    if (beta == 1.0) return out;  // exact identity
    for (int k = 0; k < kWaypoints; ++k)
        out.points[k] = point_at_arc(pts, arcs, beta * arcs[k + 1]);
    return out;
}

Trajectory perturb_lateral(const Trajectory& traj, double alpha) {
    if (!std::isfinite(alpha)) throw RangeError("perturb_lateral: alpha must be finite");
    Trajectory out = traj;
    if (alpha == 0.0) return out;
    for (auto& p : out.points) p = rotate(p, alpha);
    return out;
}

PerturbationDraw sample_perturbation(Rng& rng, const PerturbationConfig& cfg) {
    cfg.validate();
    double w[2] = {cfg.w_longitudinal, cfg.w_lateral};
    PerturbationDraw d;
    d.family = static_cast<PerturbFamily>(rng.choice(w, 2));
    if (d.family == PerturbFamily::Longitudinal)
        d.value = rng.uniform(cfg.beta_min, cfg.beta_max);
    else
        d.value = rng.uniform(-cfg.alpha_max, cfg.alpha_max);
    return d;
}

Trajectory apply_perturbation(const Trajectory& traj, const PerturbationDraw& draw) {
    return draw.family == PerturbFamily::Longitudinal
               ? perturb_longitudinal(traj, draw.value)
               : perturb_lateral(traj, draw.value);
}

}  // namespace maskplan
