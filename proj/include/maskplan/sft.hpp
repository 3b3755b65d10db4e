#pragma once

#include <functional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskplan/model.hpp"
#include "maskplan/perturbations.hpp"
#include "maskplan/scene_sim.hpp"

namespace maskplan {

struct AdamConfig {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    nlohmann::json to_json() const;
    static AdamConfig from_json(const nlohmann::json& j);
};

struct AdamState {
    Vec m, v;
    int64_t t = 0;

    static AdamState init(int64_t n);
};

void adam_step(Params& params, const Params& grads, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
    double lambda_sap = 1.0;
    double lambda_field = 0.05;
    double lambda_goal = 1.0;
    double t_min = 0.1;  // mask-ratio distribution U[t_min, t_max]
    double t_max = 1.0;
    AdamConfig adam;
    int batch_size = 16;
    int steps = 2000;
    int threads = 2;
    double r_dac = 0.5;
    double eps_safe = 0.5;
    PerturbationConfig perturb;
    uint64_t seed = 1;
    int log_every = 25;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct LossBreakdown {
    double dlm = 0.0;
    double sap = 0.0;
    double field = 0.0;
    double goal = 0.0;
    double total = 0.0;  // dlm + l_sap*sap + l_field*field + l_goal*goal
    int saturations = 0;
};

// One optimizer step over a scene batch: a masked drafting pass (DLM + field
// + goal) and a perturbed token-to-token pass (SAP). Per-sample noise derives
// from (cfg.seed, step_index, item), so resumed runs replay exactly.
LossBreakdown sup_train_step(const std::vector<const Scene*>& batch, Params& params,
                             AdamState& adam, const TrainConfig& cfg, const Vocabulary& v,
                             int64_t step_index);

// Loss evaluation only (no update); used for validation curves.
LossBreakdown sup_eval_batch(const std::vector<const Scene*>& batch, const Params& params,
                             const TrainConfig& cfg, const Vocabulary& v, uint64_t noise_seed);

struct SftLogRow {
    int64_t step = 0;
    LossBreakdown loss;
};

using TrainProbe = std::function<void(int64_t step, const Params& params)>;

std::vector<SftLogRow> sft_train(const std::vector<Scene>& train, Params& params,
                                 AdamState& adam, const TrainConfig& cfg, const Vocabulary& v,
                                 int64_t start_step = 0, const TrainProbe& probe = nullptr,
                                 int probe_every = 0);

}  // namespace maskplan
