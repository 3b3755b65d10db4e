#pragma once

#include <functional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskplan/planner.hpp"
#include "maskplan/reward.hpp"
#include "maskplan/sft.hpp"

namespace maskplan {

struct RLConfig {
    int n_goals = 3;          // N_g
    int draws_per_goal = 2;   // I; G = N_g * I
    double clip_eps = 0.2;
    double lambda_kl = 0.02;
    AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
    int epochs = 30;
    int scenes_per_epoch = 48;
    double reward_scale = 0.01;  // aggregate [0,100] -> [0,1] for advantages
    int threads = 2;
    uint64_t seed = 7;
    PipelineConfig pipeline;
    RewardWeights reward;

    void validate() const;
    nlohmann::json to_json() const;
    static RLConfig from_json(const nlohmann::json& j);
};

// Composed draft-and-edit token rollout. The first s_draft transitions turn
// masks into tokens; the next s_edit transitions rewrite concrete tokens.
// Terminal reward is computed on the detokenized final state only.
struct Rollout {
    std::vector<TokenSequence> states;                 // s_draft + s_edit + 1 entries
    std::vector<std::array<double, kActionLen>> old_prob;  // per transition, realized-token prob
    int s_draft = 0;
    int s_edit = 0;
    int goal_index = 0;
    int draw_index = 0;
    double reward = 0.0;  // scaled terminal reward
    RewardBreakdown breakdown;
    Trajectory pre_edit, post_edit;
};

// G stochastic rollouts (behavior = `params`, probabilities recorded at
// sampling time). Fewer than n_goals NMS survivors shrinks the group.
std::vector<Rollout> sample_rollout_group(const Scene& scene, const Params& params,
                                          const Vocabulary& v, const RLConfig& cfg, Rng& rng);

// Mean-centered rewards. Throws ContractError for fewer than 2 entries.
std::vector<double> group_advantage(const std::vector<double>& rewards);

// 1 exactly where the two states differ.
std::array<uint8_t, kActionLen> transition_indicator(const TokenSequence& a,
                                                     const TokenSequence& b);

struct RLLossBreakdown {
    double surrogate = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

// Clipped-ratio surrogate over changed positions of every transition
// (drafting and editing), normalized by 1/(G*L), plus lambda_kl times the
// mean per-position full-vocabulary KL(pi_theta || pi_ref) on the recorded
// states. Gradients accumulate into `grads` when non-null.
RLLossBreakdown policy_gradient_loss(const std::vector<Rollout>& rollouts,
                                     const std::vector<double>& advantages,
                                     const PromptInput& prompt, const Params& params,
                                     const Params& ref_params, const Vocabulary& v,
                                     const RLConfig& cfg, Params* grads);

struct RLLogRow {
    int epoch = 0;
    double pre_edit_reward = 0.0;   // probe set, greedy standard inference
    double post_edit_reward = 0.0;
    double mean_group_reward = 0.0;  // training scenes, scaled back to [0,100]
    double surrogate = 0.0;
    double kl = 0.0;
    int collapsed_groups = 0;  // groups with all-equal rewards (warning only)
};

using RLProbe = std::function<void(const RLLogRow&)>;

// On-policy loop: sample group -> advantage -> loss -> one Adam step per
// group. Logs pre-/post-edit probe rewards every epoch.
std::vector<RLLogRow> rl_train_loop(const std::vector<Scene>& train,
                                    const std::vector<Scene>& probe, Params& params,
                                    const Vocabulary& v, const RLConfig& cfg,
                                    const RLProbe& on_epoch = nullptr);

// Mean pre-/post-edit aggregate reward of greedy standard plans over a scene
// set (the probe used for the AutoEdit-gain curve).
std::pair<double, double> probe_edit_gain(const std::vector<Scene>& scenes, const Params& params,
                                          const Vocabulary& v, const PipelineConfig& pipe,
                                          const RewardWeights& w, int threads = 2);

}  // namespace maskplan
