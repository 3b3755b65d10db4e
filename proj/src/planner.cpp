#include "maskplan/planner.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"

namespace maskplan {

void PipelineConfig::validate() const {
    if (n_goals < 1 || top_k < 1) throw ConfigError("pipeline: need positive goal counts");
    if (nms_radius < 0.0) throw ConfigError("pipeline: nms_radius must be >= 0");
    if (s_draft < 1) throw ConfigError("pipeline: s_draft must be >= 1");
    if (s_edit < 0) throw ConfigError("pipeline: s_edit must be >= 0");
    if (commit_fraction < 0.0 || commit_fraction > 1.0)
        throw ConfigError("pipeline: commit_fraction must lie in [0,1]");
}

nlohmann::json PipelineConfig::to_json() const {
    return {{"n_goals", n_goals},         {"top_k", top_k},
            {"nms_radius", nms_radius},   {"s_draft", s_draft},
            {"s_edit", s_edit},           {"commit_fraction", commit_fraction}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.n_goals = j.at("n_goals").get<int>();
    c.top_k = j.at("top_k").get<int>();
    c.nms_radius = j.at("nms_radius").get<double>();
    c.s_draft = j.at("s_draft").get<int>();
    c.s_edit = j.at("s_edit").get<int>();
    c.commit_fraction = j.at("commit_fraction").get<double>();
    c.validate();
    return c;
}

namespace {

bool goal_before(const GoalProposal& a, const GoalProposal& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    if (a.x_token != b.x_token) return a.x_token < b.x_token;
    return a.y_token < b.y_token;
}

}  // namespace

std::vector<GoalProposal> goal_topk(const Mat& goal_logit_row, const Vocabulary& v, int k) {
    const int bx = v.bins_x(), by = v.bins_y();
    if (goal_logit_row.cols() != bx + by) throw ContractError("goal_topk: logit width");
    Eigen::VectorXd lx = goal_logit_row.row(0).segment(0, bx).transpose();
    Eigen::VectorXd ly = goal_logit_row.row(0).segment(bx, by).transpose();
    auto softmax = [](Eigen::VectorXd& z) {
        double mx = z.maxCoeff();
        z = (z.array() - mx).exp();
        z /= z.sum();
    };
    softmax(lx);
    softmax(ly);

    std::vector<GoalProposal> cells;
    cells.reserve(static_cast<size_t>(bx) * by);
    for (int ix = 0; ix < bx; ++ix) {
        for (int iy = 0; iy < by; ++iy) {
            GoalProposal g;
            g.x_token = ix;
            g.y_token = static_cast<int32_t>(bx + iy);
            g.prob = lx(ix) * ly(iy);
            g.position = {v.x_center(g.x_token), v.y_center(g.y_token)};
            cells.push_back(g);
        }
    }
    k = std::min<int>(k, static_cast<int>(cells.size()));
    std::partial_sort(cells.begin(), cells.begin() + k, cells.end(), goal_before);
    cells.resize(k);
    return cells;
}

std::vector<GoalProposal> nms_goals(const std::vector<GoalProposal>& sorted_candidates,
                                    double radius, int n_max) {
    std::vector<GoalProposal> survivors;
    for (const auto& c : sorted_candidates) {
        bool suppressed = false;
        for (const auto& s : survivors) {
            if ((c.position - s.position).norm() < radius) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            survivors.push_back(c);
            if (n_max > 0 && static_cast<int>(survivors.size()) >= n_max) break;
        }
    }
    return survivors;
}

std::vector<GoalProposal> propose_goals(const PrefixCache& cache, const Vocabulary& v,
                                        const PipelineConfig& cfg) {
    auto cands = goal_topk(cache.goal_logits, v, cfg.top_k);
    return nms_goals(cands, cfg.nms_radius, cfg.n_goals);
}

namespace {

struct Pick {
    int pos;
    int32_t token;
    double prob;
};

// Stochastic drafting round: sample a candidate per masked position and
// commit the n highest-probability draws.
void stochastic_draft_commit(const Mat& logits, TokenSequence& x, int n, const Vocabulary& v,
                             Rng& rng, Transition& tr) {
    std::vector<Pick> picks;
    for (int pos = 0; pos < kActionLen; ++pos) {
        if (x[pos] != v.mask_token()) continue;
        AxisChoice c = axis_sample(logits, pos, v, rng);
        picks.push_back({pos, c.token, c.prob});
    }
    std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
        if (a.prob != b.prob) return a.prob > b.prob;
        if (a.token != b.token) return a.token < b.token;
        return a.pos < b.pos;
    });
    n = std::min<int>(n, static_cast<int>(picks.size()));
    for (int i = 0; i < n; ++i) {
        x[picks[i].pos] = picks[i].token;
        tr.changed[picks[i].pos] = 1;
        tr.prob[picks[i].pos] = picks[i].prob;
    }
}

}  // namespace

TokenSequence draft_trajectory(const PrefixCache& cache, const Params& params,
                               const Vocabulary& v, const GoalProposal& goal, int s_draft,
                               DecodeMode mode, Rng* rng, TransitionLog* log) {
    if (s_draft < 1) throw ConfigError("draft_trajectory: s_draft must be >= 1");
    if (!v.is_x_token(goal.x_token) || !v.is_y_token(goal.y_token))
        throw ContractError("draft_trajectory: goal tokens on wrong axes");
    if (mode == DecodeMode::Stochastic && !rng)
        throw ContractError("draft_trajectory: stochastic mode needs an rng");

    TokenSequence x = all_masked(v);
    x[kGoalX] = goal.x_token;
    x[kGoalY] = goal.y_token;
    if (log) {
        log->initial = x;
        log->steps.clear();
    }

    int remaining = count_masks(x, v);
    for (int round = 0; round < s_draft && remaining > 0; ++round) {
        Mat logits = decode_action_block(cache, x, params);
        int rounds_left = s_draft - round;
        int n = (remaining + rounds_left - 1) / rounds_left;

        Transition tr;
        tr.prob.fill(1.0);
        tr.changed.fill(0);
        if (mode == DecodeMode::Greedy) {
            TokenSequence nx = fused_select_commit(logits, x, n, CommitMode::Draft, v,
                                                   /*edit_goal=*/false, &tr.changed);
            for (int pos = 0; pos < kActionLen; ++pos)
                if (tr.changed[pos]) tr.prob[pos] = axis_prob(logits, pos, nx[pos], v);
            x = nx;
        } else {
            stochastic_draft_commit(logits, x, n, v, *rng, tr);
        }
        tr.after = x;
        if (log) log->steps.push_back(std::move(tr));
        remaining = count_masks(x, v);
    }
    return x;
}

TokenSequence autoedit_round(const PrefixCache& cache, const Params& params,
                             const Vocabulary& v, const TokenSequence& x,
                             const EditPolicy& policy, DecodeMode mode, Rng* rng,
                             std::array<uint8_t, kActionLen>* commit_mask,
                             std::array<double, kActionLen>* prob_out) {
    if (count_masks(x, v) > 0)
        throw ContractError("autoedit_round: input must be fully concrete");
    if (mode == DecodeMode::Stochastic && !rng)
        throw ContractError("autoedit_round: stochastic mode needs an rng");

    Mat logits = decode_action_block(cache, x, params);
    const int eligible = policy.edit_goal ? kActionLen : kActionLen - 2;
    const int n = static_cast<int>(std::floor(policy.commit_fraction * eligible));

    std::array<uint8_t, kActionLen> changed{};
    std::array<double, kActionLen> probs;
    probs.fill(1.0);

    TokenSequence out;
    if (mode == DecodeMode::Greedy) {
        out = fused_select_commit(logits, x, n, CommitMode::Edit, v, policy.edit_goal, &changed);
        for (int pos = 0; pos < kActionLen; ++pos)
            if (changed[pos]) probs[pos] = axis_prob(logits, pos, out[pos], v);
    } else {
        // Position selection follows the same lowest-argmax-confidence rule;
        // replacements are sampled for exploration.
        struct Scored {
            double conf;
            int32_t tok;
            int pos;
        };
        std::vector<Scored> scored;
        for (int pos = 0; pos < kActionLen; ++pos) {
            if (!policy.edit_goal && (pos == kGoalX || pos == kGoalY)) continue;
            AxisChoice c = axis_argmax(logits, pos, v);
            scored.push_back({c.prob, c.token, pos});
        }
        std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
            if (a.conf != b.conf) return a.conf < b.conf;
            if (a.tok != b.tok) return a.tok < b.tok;
            return a.pos < b.pos;
        });
        out = x;
        for (int i = 0; i < n && i < static_cast<int>(scored.size()); ++i) {
            int pos = scored[i].pos;
            AxisChoice c = axis_sample(logits, pos, v, *rng);
            if (c.token != out[pos]) {
                out[pos] = c.token;
                changed[pos] = 1;
                probs[pos] = c.prob;
            }
        }
    }
    if (commit_mask) *commit_mask = changed;
    if (prob_out) *prob_out = probs;
    return out;
}

TokenSequence remask_edit(const PrefixCache& cache, const Params& params, const Vocabulary& v,
                          const TokenSequence& x, const std::array<uint8_t, kActionLen>& edit_mask,
                          int s_draft, DecodeMode mode, Rng* rng, double* effective_time) {
    if (count_masks(x, v) > 0) throw ContractError("remask_edit: input must be fully concrete");
    TokenSequence cur = x;
    int remaining = 0;
    for (int pos = 0; pos < kActionLen; ++pos) {
        if (edit_mask[pos]) {
            cur[pos] = v.mask_token();
            ++remaining;
        }
    }
    if (effective_time) *effective_time = static_cast<double>(remaining) / kActionLen;
    if (remaining == 0) return cur;

    // Same per-round commit budget as a fresh draft, so a full re-mask is
    // exactly a fresh draft.
    const int budget = (kActionLen - 2 + s_draft - 1) / s_draft;
    int rounds = (remaining + budget - 1) / budget;
    for (int round = 0; round < rounds && remaining > 0; ++round) {
        Mat logits = decode_action_block(cache, cur, params);
        int rounds_left = rounds - round;
        int n = (remaining + rounds_left - 1) / rounds_left;
        if (mode == DecodeMode::Greedy) {
            cur = fused_select_commit(logits, cur, n, CommitMode::Draft, v);
        } else {
            Transition tr;
            tr.prob.fill(1.0);
            tr.changed.fill(0);
            stochastic_draft_commit(logits, cur, n, v, *rng, tr);
        }
        remaining = count_masks(cur, v);
    }
    return cur;
}

PlanResult plan(const PromptInput& prompt, const Params& params, const Vocabulary& v,
                const PipelineConfig& cfg, PlanMode mode, int draws_per_goal, Rng* rng) {
    cfg.validate();
    if (draws_per_goal < 1) throw ConfigError("plan: draws_per_goal must be >= 1");
    if (mode == PlanMode::Standard) draws_per_goal = 1;

    PrefixCache cache = prefill_prefix(prompt, params);
    PlanResult result;
    result.goals = propose_goals(cache, v, cfg);

    EditPolicy policy{cfg.commit_fraction, false};
    for (size_t gi = 0; gi < result.goals.size(); ++gi) {
        for (int draw = 0; draw < draws_per_goal; ++draw) {
            DecodeMode dm = (draw == 0) ? DecodeMode::Greedy : DecodeMode::Stochastic;
            Rng local(0);
            if (dm == DecodeMode::Stochastic) {
                if (!rng) throw ContractError("plan: best-of sampling needs an rng");
                local = rng->fork("plan-draw", gi * 97 + static_cast<uint64_t>(draw));
            }
            CandidatePlan cand;
            cand.goal = result.goals[gi];
            cand.goal_index = static_cast<int>(gi);
            cand.draw_index = draw;
            cand.s_draft = cfg.s_draft;
            cand.s_edit = cfg.s_edit;

            cand.pre_edit_tokens =
                draft_trajectory(cache, params, v, cand.goal, cfg.s_draft, dm,
                                 dm == DecodeMode::Stochastic ? &local : nullptr, &cand.log);
            TokenSequence x = cand.pre_edit_tokens;
            for (int k = 0; k < cfg.s_edit; ++k) {
                Transition tr;
                x = autoedit_round(cache, params, v, x, policy, dm,
                                   dm == DecodeMode::Stochastic ? &local : nullptr,
                                   &tr.changed, &tr.prob);
                tr.after = x;
                cand.log.steps.push_back(std::move(tr));
            }
            cand.final_tokens = x;
            cand.pre_edit = detokenize(cand.pre_edit_tokens, v);
            cand.post_edit = detokenize(cand.final_tokens, v);
            result.candidates.push_back(std::move(cand));
        }
    }
    result.selected = 0;  // goals arrive probability-sorted; draw 0 is greedy
    return result;
}

std::optional<Trajectory> asd_lite_step(const Trajectory& prev_plan, const EgoMotion& motion,
                                        double elapsed, const PromptInput& ctx_now,
                                        const Params& params, const Vocabulary& v,
                                        const PipelineConfig& cfg) {
    const double dt = prev_plan.dt;
    if (dt <= 0.0) throw ContractError("asd_lite_step: non-positive timestep");
    double steps_f = elapsed / dt;
    int n = static_cast<int>(std::lround(steps_f));
    if (std::abs(steps_f - n) > 1e-9 || n < 0)
        throw ContractError("asd_lite_step: elapsed must be a multiple of the waypoint timestep");
    if (n >= kWaypoints) return std::nullopt;  // horizon exhausted: full-step fallback

    // Shift out consumed waypoints and re-express the rest in the new frame.
    std::vector<Vec2> pts;
    for (int i = n; i < kWaypoints; ++i)
        pts.push_back(rotate(prev_plan.points[i] - motion.translation, -motion.yaw));
    Vec2 delta = pts.size() >= 2 ? pts.back() - pts[pts.size() - 2] : pts.back();
    while (pts.size() < kWaypoints) pts.push_back(pts.back() + delta);

    Trajectory shifted;
    shifted.dt = dt;
    for (int i = 0; i < kWaypoints; ++i) shifted.points[i] = pts[i];

    TokenSequence x = tokenize(shifted, v, /*clamp=*/true);
    PrefixCache cache = prefill_prefix(ctx_now, params);
    // 1+1 refresh: two T2T rounds; the extrapolated tail is editable.
    EditPolicy policy{cfg.commit_fraction, /*edit_goal=*/true};
    x = autoedit_round(cache, params, v, x, policy, DecodeMode::Greedy, nullptr);
    x = autoedit_round(cache, params, v, x, policy, DecodeMode::Greedy, nullptr);
    return detokenize(x, v);
}

}  // namespace maskplan
