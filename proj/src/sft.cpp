#include "maskplan/sft.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"
#include "maskplan/field_objective.hpp"
#include "maskplan/losses.hpp"
#include "maskplan/util.hpp"

namespace maskplan {

nlohmann::json AdamConfig::to_json() const {
    return {{"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}};
}

AdamConfig AdamConfig::from_json(const nlohmann::json& j) {
    AdamConfig c;
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    return c;
}

AdamState AdamState::init(int64_t n) {
    AdamState s;
    s.m = Vec::Zero(n);
    s.v = Vec::Zero(n);
    s.t = 0;
    return s;
}

void adam_step(Params& params, const Params& grads, AdamState& state, const AdamConfig& cfg) {
    Vec g = grads.pack();
    Vec p = params.pack();
    if (state.m.size() != g.size()) throw ContractError("adam_step: state size mismatch");
    state.t += 1;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
    state.v = cfg.beta2 * state.v.array().matrix() + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    Vec mhat = state.m / bc1;
    Vec vhat = state.v / bc2;
    p -= cfg.lr * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                     Vec::Constant(g.size(), cfg.eps));
    params.unpack(p);
    params.version += 1;
}

void TrainConfig::validate() const {
    if (lambda_sap < 0 || lambda_field < 0 || lambda_goal < 0 ||
        !std::isfinite(lambda_sap + lambda_field + lambda_goal))
        throw ConfigError("train: loss weights must be finite and non-negative");
    if (!(t_min >= 0.0 && t_max <= 1.0 && t_min <= t_max))
        throw ConfigError("train: mask-ratio bounds must satisfy 0 <= t_min <= t_max <= 1");
    if (batch_size < 1 || steps < 0 || threads < 1)
        throw ConfigError("train: batch/steps/threads must be positive");
    if (eps_safe < 0.0) throw ConfigError("train: eps_safe must be >= 0");
    perturb.validate();
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lambda_sap", lambda_sap},
            {"lambda_field", lambda_field},
            {"lambda_goal", lambda_goal},
            {"t_min", t_min},
            {"t_max", t_max},
            {"adam", adam.to_json()},
            {"batch_size", batch_size},
            {"steps", steps},
            {"threads", threads},
            {"r_dac", r_dac},
            {"eps_safe", eps_safe},
            {"perturb", perturb.to_json()},
            {"seed", seed},
            {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lambda_sap = j.at("lambda_sap").get<double>();
    c.lambda_field = j.at("lambda_field").get<double>();
    c.lambda_goal = j.at("lambda_goal").get<double>();
    c.t_min = j.at("t_min").get<double>();
    c.t_max = j.at("t_max").get<double>();
    c.adam = AdamConfig::from_json(j.at("adam"));
    c.batch_size = j.at("batch_size").get<int>();
    c.steps = j.at("steps").get<int>();
    c.threads = j.at("threads").get<int>();
    c.r_dac = j.at("r_dac").get<double>();
    c.eps_safe = j.at("eps_safe").get<double>();
    c.perturb = PerturbationConfig::from_json(j.at("perturb"));
    c.seed = j.at("seed").get<uint64_t>();
    c.log_every = j.at("log_every").get<int>();
    c.validate();
    return c;
}

namespace {

// Per-sample losses and gradient accumulation (two forward/backward passes).
LossBreakdown accumulate_sample(const Scene& scene, const Params& params,
                                const AttentionLayout& layout, const TrainConfig& cfg,
                                const Vocabulary& v, Rng rng, Params* grads) {
    LossBreakdown out;
    TokenSequence x0 = tokenize(scene.expert, v, /*clamp=*/true);
    double t = rng.uniform(cfg.t_min, cfg.t_max);
    TokenSequence xt = forward_mask(x0, t, rng, v);
    PerturbationDraw draw = sample_perturbation(rng, cfg.perturb);
    TokenSequence x_pert = tokenize(apply_perturbation(scene.expert, draw), v, /*clamp=*/true);
    PromptInput prompt = encode_prompt(scene, params.cfg);

    Tape tape;
    Mat d_logits = Mat::Zero(kActionLen, v.coord_vocab());
    Mat d_goal = Mat::Zero(1, v.bins_x() + v.bins_y());

    // Pass 1: masked drafting objective + field regularizer + goal head.
    forward(params, prompt, xt, layout, tape);
    out.dlm = dlm_loss(tape.logits, x0, grads ? &d_logits : nullptr, 1.0);
    if (cfg.lambda_field > 0.0) {
        CostField cost = dac_cost_field(scene.grid, cfg.r_dac, cfg.eps_safe);
        int sat = 0;
        out.field = field_loss_grad(tape.logits, cost, v, grads ? &d_logits : nullptr,
                                    cfg.lambda_field, &sat);
        out.saturations += sat;
    }
    out.goal = goal_nll(tape.goal_logits, x0[kGoalX], x0[kGoalY], v,
                        grads ? &d_goal : nullptr, cfg.lambda_goal);
    if (grads) backward(params, layout, tape, d_logits, d_goal, *grads);

    // Pass 2: token-to-token correction objective on the perturbed sequence.
    forward(params, prompt, x_pert, layout, tape);
    d_logits.setZero();
    out.sap = sap_loss(tape.logits, x0, x_pert, v, grads ? &d_logits : nullptr, cfg.lambda_sap);
    if (grads) backward(params, layout, tape, d_logits, Mat(), *grads);

    out.total = out.dlm + cfg.lambda_sap * out.sap + cfg.lambda_field * out.field +
                cfg.lambda_goal * out.goal;
    return out;
}

LossBreakdown run_batch(const std::vector<const Scene*>& batch, const Params& params,
                        const TrainConfig& cfg, const Vocabulary& v, uint64_t noise_seed,
                        int64_t step_index, Params* grads_out) {
    const int n = static_cast<int>(batch.size());
    AttentionLayout layout = AttentionLayout::build(params.cfg.prompt_len(), kActionLen);
    const int threads = std::min(cfg.threads, n);

    std::vector<Params> grads(grads_out ? threads : 0);
    std::vector<LossBreakdown> parts(threads);
    parallel_chunks(n, threads, [&](int ti, int begin, int end) {
        Params* local = nullptr;
        if (grads_out) {
            grads[ti] = Params::zeros_like(params);
            local = &grads[ti];
        }
        for (int i = begin; i < end; ++i) {
            Rng rng = Rng(noise_seed).fork("sft-noise", static_cast<uint64_t>(step_index))
                          .fork("item", static_cast<uint64_t>(i));
            LossBreakdown lb =
                accumulate_sample(*batch[i], params, layout, cfg, v, rng, local);
            parts[ti].dlm += lb.dlm;
            parts[ti].sap += lb.sap;
            parts[ti].field += lb.field;
            parts[ti].goal += lb.goal;
            parts[ti].total += lb.total;
            parts[ti].saturations += lb.saturations;
        }
    });

    LossBreakdown sum;
    for (int t = 0; t < threads; ++t) {
        sum.dlm += parts[t].dlm;
        sum.sap += parts[t].sap;
        sum.field += parts[t].field;
        sum.goal += parts[t].goal;
        sum.total += parts[t].total;
        sum.saturations += parts[t].saturations;
        if (grads_out && t > 0) grads[0].add_scaled(grads[t], 1.0);
    }
    double inv = 1.0 / n;
    sum.dlm *= inv;
    sum.sap *= inv;
    sum.field *= inv;
    sum.goal *= inv;
    sum.total *= inv;
    if (grads_out) {
        grads[0].for_each([&](const char*, Mat& m) { m *= inv; });
        *grads_out = std::move(grads[0]);
    }
    return sum;
}

}  // namespace

LossBreakdown sup_train_step(const std::vector<const Scene*>& batch, Params& params,
                             AdamState& adam, const TrainConfig& cfg, const Vocabulary& v,
                             int64_t step_index) {
    if (batch.empty()) throw ContractError("sup_train_step: empty batch");
    Params grads = Params::zeros_like(params);
    LossBreakdown lb = run_batch(batch, params, cfg, v, cfg.seed, step_index, &grads);
    if (!std::isfinite(lb.total))
        throw NumericError("sup_train_step: non-finite loss at step " + std::to_string(step_index) +
                           " (dlm=" + std::to_string(lb.dlm) + " sap=" + std::to_string(lb.sap) +
                           " field=" + std::to_string(lb.field) + ")");
    adam_step(params, grads, adam, cfg.adam);
    return lb;
}

LossBreakdown sup_eval_batch(const std::vector<const Scene*>& batch, const Params& params,
                             const TrainConfig& cfg, const Vocabulary& v, uint64_t noise_seed) {
    if (batch.empty()) throw ContractError("sup_eval_batch: empty batch");
    return run_batch(batch, params, cfg, v, noise_seed, 0, nullptr);
}

std::vector<SftLogRow> sft_train(const std::vector<Scene>& train, Params& params,
                                 AdamState& adam, const TrainConfig& cfg, const Vocabulary& v,
                                 int64_t start_step, const TrainProbe& probe, int probe_every) {
    cfg.validate();
    if (train.empty()) throw ContractError("sft_train: empty corpus");
    std::vector<SftLogRow> log;
    for (int64_t step = start_step; step < cfg.steps; ++step) {
        Rng pick = Rng(cfg.seed).fork("sft-batch", static_cast<uint64_t>(step));
        std::vector<const Scene*> batch;
        batch.reserve(cfg.batch_size);
        for (int i = 0; i < cfg.batch_size; ++i)
            batch.push_back(&train[static_cast<size_t>(
                pick.uniform_int(0, static_cast<int64_t>(train.size()) - 1))]);
        LossBreakdown lb = sup_train_step(batch, params, adam, cfg, v, step);
        if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
            log.push_back({step, lb});
        if (probe && probe_every > 0 && (step % probe_every == 0 || step + 1 == cfg.steps))
            probe(step, params);
    }
    return log;
}

}  // namespace maskplan
