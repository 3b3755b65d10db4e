#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskplan/planner.hpp"
#include "maskplan/reward.hpp"

namespace maskplan {

struct EvalOptions {
    PipelineConfig pipeline;
    RewardWeights reward;
    int best_of_draws = 2;  // draws per goal in best-of mode (first greedy)
    uint64_t seed = 123;
    int threads = 2;
};

struct CandidateEval {
    int32_t goal_x = 0, goal_y = 0;
    double goal_prob = 0.0;
    int draw_index = 0;
    Trajectory pre, post;
    RewardBreakdown pre_r, post_r;
};

struct SceneEval {
    uint64_t scene_seed = 0;
    std::vector<CandidateEval> candidates;
    int selected = 0;
    double best_post = 0.0;  // oracle-best post-edit aggregate over candidates
};

struct EvalAggregate {
    double mean_pre = 0.0;       // selected candidate, pre-edit aggregate
    double mean_post = 0.0;      // selected candidate, post-edit aggregate
    double mean_best = 0.0;      // oracle best-of over candidates
    RewardBreakdown mean_post_parts;  // per-subscore means of the selected post plan
    int n = 0;
};

struct EvalReport {
    nlohmann::json header;
    std::vector<SceneEval> rows;
    EvalAggregate agg;
};

// Standard single-trajectory evaluation: greedy decision-draft-reflect, one
// candidate per surviving goal, selected = highest-confidence goal.
EvalReport eval_single(const std::vector<Scene>& scenes, const Params& params,
                       const Vocabulary& v, const EvalOptions& opts);

// Best-of-N oracle evaluation: n_goals x best_of_draws candidates per scene
// (first draw per goal greedy, the rest sampled); mean_best is the oracle.
EvalReport eval_best_of(const std::vector<Scene>& scenes, const Params& params,
                        const Vocabulary& v, const EvalOptions& opts);

void write_eval_report(const std::string& path, const EvalReport& report);
EvalReport read_eval_report(const std::string& path);

nlohmann::json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json reward_to_json(const RewardBreakdown& r);
RewardBreakdown reward_from_json(const nlohmann::json& j);

}  // namespace maskplan
