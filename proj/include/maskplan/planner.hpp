#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskplan/model.hpp"
#include "maskplan/runtime.hpp"
#include "maskplan/scene_sim.hpp"

namespace maskplan {

struct GoalProposal {
    int32_t x_token = 0;
    int32_t y_token = 0;
    double prob = 0.0;
    Vec2 position;  // detokenized BEV endpoint
};

struct PipelineConfig {
    int n_goals = 3;            // N_g
    int top_k = 32;
    double nms_radius = 1.2;    // meters
    int s_draft = 3;
    int s_edit = 3;             // K AutoEdit rounds
    double commit_fraction = 0.25;

    void validate() const;
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

enum class DecodeMode { Greedy, Stochastic };

// One token-state transition. `prob` holds the axis-softmax probability of the
// realized token at every changed position (1.0 elsewhere); `changed` is the
// transition indicator.
struct Transition {
    TokenSequence after;
    std::array<double, kActionLen> prob;
    std::array<uint8_t, kActionLen> changed;
};

struct TransitionLog {
    TokenSequence initial;
    std::vector<Transition> steps;
};

// Top-k cells of the factorized goal posterior, ordered by
// (probability desc, x token asc, y token asc).
std::vector<GoalProposal> goal_topk(const Mat& goal_logit_row, const Vocabulary& v, int k);

// Greedy NMS over probability-sorted candidates: a candidate within
// `radius` meters of an accepted survivor is suppressed. n_max <= 0 keeps all
// survivors.
std::vector<GoalProposal> nms_goals(const std::vector<GoalProposal>& sorted_candidates,
                                    double radius, int n_max);

std::vector<GoalProposal> propose_goals(const PrefixCache& cache, const Vocabulary& v,
                                        const PipelineConfig& cfg);

// Confidence-scheduled parallel unmasking with the goal pair anchored at
// positions 14/15. Each round commits ceil(remaining / rounds_left) positions.
TokenSequence draft_trajectory(const PrefixCache& cache, const Params& params,
                               const Vocabulary& v, const GoalProposal& goal, int s_draft,
                               DecodeMode mode, Rng* rng, TransitionLog* log = nullptr);

struct EditPolicy {
    double commit_fraction = 0.25;
    bool edit_goal = false;  // lite-step frames may rewrite the anchor too
};

// One token-to-token editing round: a single forward pass on the concrete
// sequence, then the floor(fraction * eligible) lowest-confidence positions
// are rewritten. The returned mask marks positions that actually changed.
TokenSequence autoedit_round(const PrefixCache& cache, const Params& params,
                             const Vocabulary& v, const TokenSequence& x,
                             const EditPolicy& policy, DecodeMode mode, Rng* rng,
                             std::array<uint8_t, kActionLen>* commit_mask = nullptr,
                             std::array<double, kActionLen>* prob_out = nullptr);

// Re-masking ablation: positions in `edit_mask` return to [MASK] and are
// re-denoised from effective time |e|/L with the drafting scheduler's
// per-round budget.
TokenSequence remask_edit(const PrefixCache& cache, const Params& params, const Vocabulary& v,
                          const TokenSequence& x, const std::array<uint8_t, kActionLen>& edit_mask,
                          int s_draft, DecodeMode mode, Rng* rng,
                          double* effective_time = nullptr);

struct CandidatePlan {
    GoalProposal goal;
    int goal_index = 0;
    int draw_index = 0;
    TransitionLog log;  // drafting then editing transitions
    int s_draft = 0;
    int s_edit = 0;
    TokenSequence pre_edit_tokens, final_tokens;
    Trajectory pre_edit, post_edit;
};

enum class PlanMode { Standard, BestOf };

struct PlanResult {
    std::vector<GoalProposal> goals;
    std::vector<CandidatePlan> candidates;
    int selected = 0;  // standard mode: highest-confidence goal's greedy draw
};

// Decision-draft-reflect. Standard mode runs one greedy draw per goal and
// selects the top survivor's plan; best-of mode runs `draws_per_goal` draws
// per goal (first greedy, rest sampled) and leaves selection to the caller.
PlanResult plan(const PromptInput& prompt, const Params& params, const Vocabulary& v,
                const PipelineConfig& cfg, PlanMode mode, int draws_per_goal = 1,
                Rng* rng = nullptr);

// Lite-step frame: shift out the elapsed waypoints, rigid-transform the
// remainder into the current ego frame, extrapolate the vacated tail, then run
// the 1+1 draft-reflect refresh (two T2T rounds, goal editable). Returns
// nullopt when the whole horizon has elapsed (full-step fallback signal).
std::optional<Trajectory> asd_lite_step(const Trajectory& prev_plan, const EgoMotion& motion,
                                        double elapsed, const PromptInput& ctx_now,
                                        const Params& params, const Vocabulary& v,
                                        const PipelineConfig& cfg);

}  // namespace maskplan
