#pragma once

#include <nlohmann/json_fwd.hpp>

#include "maskplan/rng.hpp"
#include "maskplan/trajectory_codec.hpp"

namespace maskplan {

// Structure-aware perturbation families used to synthesize AutoEdit training
// pairs. Exactly one family is applied per sample, in continuous space before
// tokenization.
struct PerturbationConfig {
    double beta_min = 0.7;   // longitudinal progress scale
    double beta_max = 1.3;
    double alpha_max = 0.15;  // lateral rotation bound, radians
    double w_longitudinal = 0.5;
    double w_lateral = 0.5;

    void validate() const;
    nlohmann::json to_json() const;
    static PerturbationConfig from_json(const nlohmann::json& j);
};

enum class PerturbFamily : int { Longitudinal = 0, Lateral = 1 };

// Rescales progress along the arc length: waypoint i moves to arc beta * d_i
// along the original polyline (measured from the ego origin), extrapolating
// the last segment beyond the original extent.
Trajectory perturb_longitudinal(const Trajectory& traj, double beta);

// Rotates every waypoint about the ego origin.
Trajectory perturb_lateral(const Trajectory& traj, double alpha);

struct PerturbationDraw {
    PerturbFamily family = PerturbFamily::Longitudinal;
    double value = 1.0;  // beta or alpha
};

PerturbationDraw sample_perturbation(Rng& rng, const PerturbationConfig& cfg);
Trajectory apply_perturbation(const Trajectory& traj, const PerturbationDraw& draw);

}  // namespace maskplan
