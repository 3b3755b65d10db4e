#include "maskplan/rl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"
#include "maskplan/util.hpp"

namespace maskplan {

void RLConfig::validate() const {
    if (n_goals < 1 || draws_per_goal < 1)
        throw ConfigError("rl: need positive group composition");
    if (n_goals * draws_per_goal < 2)
        throw ConfigError("rl: group size G must be >= 2 for a group-relative advantage");
    if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ConfigError("rl: clip_eps must lie in (0,1)");
    if (lambda_kl < 0.0) throw ConfigError("rl: lambda_kl must be >= 0");
    if (reward_scale <= 0.0) throw ConfigError("rl: reward_scale must be > 0");
    pipeline.validate();
}

nlohmann::json RLConfig::to_json() const {
    return {{"n_goals", n_goals},
            {"draws_per_goal", draws_per_goal},
            {"clip_eps", clip_eps},
            {"lambda_kl", lambda_kl},
            {"adam", adam.to_json()},
            {"epochs", epochs},
            {"scenes_per_epoch", scenes_per_epoch},
            {"reward_scale", reward_scale},
            {"threads", threads},
            {"seed", seed},
            {"pipeline", pipeline.to_json()},
            {"reward", reward.to_json()}};
}

RLConfig RLConfig::from_json(const nlohmann::json& j) {
    RLConfig c;
    c.n_goals = j.at("n_goals").get<int>();
    c.draws_per_goal = j.at("draws_per_goal").get<int>();
    c.clip_eps = j.at("clip_eps").get<double>();
    c.lambda_kl = j.at("lambda_kl").get<double>();
    c.adam = AdamConfig::from_json(j.at("adam"));
    c.epochs = j.at("epochs").get<int>();
    c.scenes_per_epoch = j.at("scenes_per_epoch").get<int>();
    c.reward_scale = j.at("reward_scale").get<double>();
    c.threads = j.at("threads").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.pipeline = PipelineConfig::from_json(j.at("pipeline"));
    c.reward = RewardWeights::from_json(j.at("reward"));
    c.validate();
    return c;
}

std::vector<Rollout> sample_rollout_group(const Scene& scene, const Params& params,
                                          const Vocabulary& v, const RLConfig& cfg, Rng& rng) {
    PipelineConfig pipe = cfg.pipeline;
    pipe.n_goals = cfg.n_goals;

    PromptInput prompt = encode_prompt(scene, params.cfg);
    PrefixCache cache = prefill_prefix(prompt, params);
    std::vector<GoalProposal> goals = propose_goals(cache, v, pipe);
    // Fewer NMS survivors than requested shrinks the group for this scene.

    EditPolicy policy{pipe.commit_fraction, false};
    std::vector<Rollout> rollouts;
    for (size_t gi = 0; gi < goals.size(); ++gi) {
        for (int draw = 0; draw < cfg.draws_per_goal; ++draw) {
            Rng local = rng.fork("rollout", gi * 1000 + static_cast<uint64_t>(draw));
            Rollout r;
            r.goal_index = static_cast<int>(gi);
            r.draw_index = draw;
            r.s_draft = pipe.s_draft;
            r.s_edit = pipe.s_edit;

            TransitionLog log;
            TokenSequence x = draft_trajectory(cache, params, v, goals[gi], pipe.s_draft,
                                               DecodeMode::Stochastic, &local, &log);
            r.states.push_back(log.initial);
            for (auto& step : log.steps) {
                r.states.push_back(step.after);
                r.old_prob.push_back(step.prob);
            }
            r.s_draft = static_cast<int>(log.steps.size());
            r.pre_edit = detokenize(x, v);

            for (int k = 0; k < pipe.s_edit; ++k) {
                Transition tr;
                x = autoedit_round(cache, params, v, x, policy, DecodeMode::Stochastic, &local,
                                   &tr.changed, &tr.prob);
                r.states.push_back(x);
                r.old_prob.push_back(tr.prob);
            }
            r.post_edit = detokenize(x, v);
            r.breakdown = score(r.post_edit, scene, cfg.reward);
            r.reward = r.breakdown.aggregate * cfg.reward_scale;
            rollouts.push_back(std::move(r));
        }
    }
    return rollouts;
}

std::vector<double> group_advantage(const std::vector<double>& rewards) {
    if (rewards.size() < 2)
        throw ContractError("group_advantage: need at least 2 rollouts");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    std::vector<double> adv(rewards.size());
    for (size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
    return adv;
}

std::array<uint8_t, kActionLen> transition_indicator(const TokenSequence& a,
                                                     const TokenSequence& b) {
    std::array<uint8_t, kActionLen> ind{};
    for (int i = 0; i < kActionLen; ++i) ind[i] = a[i] != b[i] ? 1 : 0;
    return ind;
}

namespace {

// KL(p || q) between full-vocabulary softmax rows, with gradient w.r.t. the
// p-side logits accumulated as scale * p .* (log p - log q - kl).
double row_kl(const Mat& logits_p, const Mat& logits_q, int row, Mat* d_logits, double scale) {
    const int V = static_cast<int>(logits_p.cols());
    Eigen::RowVectorXd lp = logits_p.row(row);
    Eigen::RowVectorXd lq = logits_q.row(row);
    double mp = lp.maxCoeff(), mq = lq.maxCoeff();
    Eigen::RowVectorXd ep = (lp.array() - mp).exp();
    Eigen::RowVectorXd eq = (lq.array() - mq).exp();
    double zp = ep.sum(), zq = eq.sum();
    double kl = 0.0;
    Eigen::RowVectorXd diff(V);
    for (int t = 0; t < V; ++t) {
        double logp = lp(t) - mp - std::log(zp);
        double logq = lq(t) - mq - std::log(zq);
        diff(t) = logp - logq;
        kl += (ep(t) / zp) * diff(t);
    }
    if (d_logits) {
        for (int t = 0; t < V; ++t)
            (*d_logits)(row, t) += scale * (ep(t) / zp) * (diff(t) - kl);
    }
    return kl;
}

}  // namespace

RLLossBreakdown policy_gradient_loss(const std::vector<Rollout>& rollouts,
                                     const std::vector<double>& advantages,
                                     const PromptInput& prompt, const Params& params,
                                     const Params& ref_params, const Vocabulary& v,
                                     const RLConfig& cfg, Params* grads) {
    if (rollouts.size() != advantages.size())
        throw ContractError("policy_gradient_loss: rollout/advantage count mismatch");
    if (rollouts.empty()) throw ContractError("policy_gradient_loss: empty group");

    const int G = static_cast<int>(rollouts.size());
    AttentionLayout layout = AttentionLayout::build(params.cfg.prompt_len(), kActionLen);
    PrefixCache ref_cache = prefill_prefix(prompt, ref_params);

    int64_t total_transitions = 0;
    for (const auto& r : rollouts) total_transitions += static_cast<int64_t>(r.states.size()) - 1;
    const double kl_norm = 1.0 / (static_cast<double>(total_transitions) * kActionLen);
    const double sur_norm = 1.0 / (static_cast<double>(G) * kActionLen);

    const int threads = std::min(cfg.threads, G);
    std::vector<Params> tgrads(grads ? threads : 0);
    std::vector<double> sur_parts(threads, 0.0), kl_parts(threads, 0.0);
    std::vector<std::string> failures(threads);

    parallel_chunks(G, threads, [&](int ti, int begin, int end) {
        Params* local = nullptr;
        if (grads) {
            tgrads[ti] = Params::zeros_like(params);
            local = &tgrads[ti];
        }
        Tape tape;
        Mat d_logits;
        try {
            for (int g = begin; g < end; ++g) {
                const Rollout& ro = rollouts[g];
                const double A = advantages[g];
                for (size_t s = 0; s + 1 < ro.states.size(); ++s) {
                    const TokenSequence& xs = ro.states[s];
                    const TokenSequence& xs1 = ro.states[s + 1];
                    forward(params, prompt, xs, layout, tape);
                    d_logits = Mat::Zero(kActionLen, v.coord_vocab());

                    for (int p = 0; p < kActionLen; ++p) {
                        if (xs1[p] == xs[p]) continue;  // credit only updated tokens
                        double oldp = ro.old_prob[s][p];
                        if (!(oldp > 0.0) || !std::isfinite(oldp))
                            throw NumericError(
                                "policy_gradient_loss: recorded probability of a realized "
                                "token is not positive (rollout " + std::to_string(g) +
                                ", step " + std::to_string(s) + ")");
                        double newp = axis_prob(tape.logits, p, xs1[p], v);
                        double ratio = newp / oldp;
                        if (!std::isfinite(ratio))
                            throw NumericError("policy_gradient_loss: non-finite ratio");
                        double clipped =
                            std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
                        double u = ratio * A, c = clipped * A;
                        sur_parts[ti] += std::min(u, c);
                        if (grads && u <= c) {
                            // d(min)/dlogit flows through the unclipped branch:
                            // d(ratio*A)/dlogp = ratio*A, times -sur_norm.
                            double dlogp = -sur_norm * u;
                            auto [lo, hi] = v.axis_range(p);
                            double mx = -1e300;
                            for (int t = lo; t < hi; ++t)
                                mx = std::max(mx, tape.logits(p, t));
                            double z = 0.0;
                            for (int t = lo; t < hi; ++t)
                                z += std::exp(tape.logits(p, t) - mx);
                            for (int t = lo; t < hi; ++t) {
                                double pt = std::exp(tape.logits(p, t) - mx) / z;
                                d_logits(p, t) += dlogp * ((t == xs1[p] ? 1.0 : 0.0) - pt);
                            }
                        }
                    }

                    if (cfg.lambda_kl > 0.0) {
                        Mat ref_logits = decode_action_block(ref_cache, xs, ref_params);
                        for (int p = 0; p < kActionLen; ++p)
                            kl_parts[ti] += row_kl(tape.logits, ref_logits, p,
                                                   grads ? &d_logits : nullptr,
                                                   cfg.lambda_kl * kl_norm);
                    }
                    if (grads) backward(params, layout, tape, d_logits, Mat(), *local);
                }
            }
        } catch (const Error& e) {
            failures[ti] = std::string(e.category()) + ": " + e.what();
        }
    });

    for (const auto& f : failures)
        if (!f.empty()) throw NumericError(f);

    RLLossBreakdown out;
    for (int t = 0; t < threads; ++t) {
        out.surrogate += sur_parts[t];
        out.kl += kl_parts[t];
        if (grads && t > 0) tgrads[0].add_scaled(tgrads[t], 1.0);
    }
    out.surrogate *= -sur_norm;
    out.kl *= kl_norm;
    out.total = out.surrogate + cfg.lambda_kl * out.kl;
    if (grads) *grads = std::move(tgrads[0]);
    return out;
}

std::pair<double, double> probe_edit_gain(const std::vector<Scene>& scenes, const Params& params,
                                          const Vocabulary& v, const PipelineConfig& pipe,
                                          const RewardWeights& w, int threads) {
    if (scenes.empty()) return {0.0, 0.0};
    std::vector<double> pre(scenes.size(), 0.0), post(scenes.size(), 0.0);
    parallel_chunks(static_cast<int>(scenes.size()), threads, [&](int, int begin, int end) {
        for (int i = begin; i < end; ++i) {
            PromptInput prompt = encode_prompt(scenes[i], params.cfg);
            PlanResult res = plan(prompt, params, v, pipe, PlanMode::Standard);
            const CandidatePlan& c = res.candidates[res.selected];
            pre[i] = score(c.pre_edit, scenes[i], w).aggregate;
            post[i] = score(c.post_edit, scenes[i], w).aggregate;
        }
    });
    double mp = 0.0, mq = 0.0;
    for (size_t i = 0; i < scenes.size(); ++i) {
        mp += pre[i];
        mq += post[i];
    }
    return {mp / scenes.size(), mq / scenes.size()};
}

std::vector<RLLogRow> rl_train_loop(const std::vector<Scene>& train,
                                    const std::vector<Scene>& probe, Params& params,
                                    const Vocabulary& v, const RLConfig& cfg,
                                    const RLProbe& on_epoch) {
    cfg.validate();
    if (train.empty()) throw ContractError("rl_train_loop: empty training set");

    Params ref_params = params;  // SFT reference, frozen
    AdamState adam = AdamState::init(params.param_count());
    std::vector<RLLogRow> log;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = Rng(cfg.seed).fork("rl-epoch", static_cast<uint64_t>(epoch));
        double sur_sum = 0.0, kl_sum = 0.0, reward_sum = 0.0;
        int collapsed = 0, groups = 0, total_rollouts = 0;

        for (int i = 0; i < cfg.scenes_per_epoch; ++i) {
            const Scene& scene = train[static_cast<size_t>(
                erng.uniform_int(0, static_cast<int64_t>(train.size()) - 1))];
            Rng srng = erng.fork("scene", static_cast<uint64_t>(i));
            std::vector<Rollout> group = sample_rollout_group(scene, params, v, cfg, srng);
            if (group.size() < 2) continue;

            std::vector<double> rewards;
            rewards.reserve(group.size());
            for (const auto& r : group) rewards.push_back(r.reward);
            std::vector<double> adv = group_advantage(rewards);
            bool flat = std::all_of(adv.begin(), adv.end(),
                                    [](double a) { return std::abs(a) < 1e-12; });
            if (flat) ++collapsed;  // warning only; the KL term still applies

            PromptInput prompt = encode_prompt(scene, params.cfg);
            Params grads = Params::zeros_like(params);
            RLLossBreakdown lb =
                policy_gradient_loss(group, adv, prompt, params, ref_params, v, cfg, &grads);
            if (!std::isfinite(lb.total))
                throw NumericError("rl_train_loop: non-finite loss in epoch " +
                                   std::to_string(epoch));
            adam_step(params, grads, adam, cfg.adam);

            sur_sum += lb.surrogate;
            kl_sum += lb.kl;
            for (double r : rewards) reward_sum += r / cfg.reward_scale;
            groups += 1;
            total_rollouts += static_cast<int>(group.size());
        }

        RLLogRow row;
        row.epoch = epoch;
        auto [pre, post] = probe_edit_gain(probe, params, v, cfg.pipeline, cfg.reward,
                                           cfg.threads);
        row.pre_edit_reward = pre;
        row.post_edit_reward = post;
        row.surrogate = groups ? sur_sum / groups : 0.0;
        row.kl = groups ? kl_sum / groups : 0.0;
        row.mean_group_reward = total_rollouts ? reward_sum / total_rollouts : 0.0;
        row.collapsed_groups = collapsed;
        log.push_back(row);
        if (on_epoch) on_epoch(row);
    }
    return log;
}

}  // namespace maskplan
