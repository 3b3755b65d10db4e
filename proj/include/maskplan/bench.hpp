#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskplan/planner.hpp"
#include "maskplan/reward.hpp"

namespace maskplan {

struct PhaseStats {
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
};

struct ChainRow {
    std::string name;
    PhaseStats prefill;  // prefill + decision phase
    PhaseStats decode;   // drafting + editing phase
    double reward_mean = 0.0;
    double reward_delta = 0.0;  // vs. the baseline row
    bool gate_pass = true;
};

struct ChainReport {
    std::vector<ChainRow> rows;
    double quality_gate = 1.0;  // max tolerated |reward delta|, aggregate points
    nlohmann::json to_json() const;
    std::string table() const;
};

struct BenchConfig {
    int warmup = 2;
    int iters = 8;
    double quality_gate = 1.0;
    // Chain steps, stacked in order. Known names: baseline, merged, cache,
    // ffn (needs wide_params), fused, asd.
    std::vector<std::string> chain = {"baseline", "merged", "cache", "fused", "asd"};
    int n_clips = 3;
    int clip_frames = 20;
    uint64_t seed = 99;
};

// Measures the optimization chain on `scenes`. Rows before "asd" are
// semantically equivalent plans (token-identical), so their reward deltas are
// exact zeros by construction; the ASD and FFN rows change behavior and are
// gated at quality_gate. `wide_params`, when provided, is the full-width
// action-FFN ablation checkpoint for the "ffn" row.
ChainReport bench_chain(const std::vector<Scene>& scenes, const Params& params,
                        const Vocabulary& v, const PipelineConfig& pipe,
                        const BenchConfig& cfg, const SceneConfig& scene_cfg,
                        const Params* wide_params = nullptr);

struct AsdResult {
    double mean_reward_full = 0.0;  // full pipeline on every frame
    double mean_reward_asd = 0.0;   // alternating full/lite frames
    double full_decode_ms = 0.0;    // mean decode wall time per full frame
    double lite_decode_ms = 0.0;    // mean decode wall time per lite frame
    int frames = 0;
};

// Scripted-clip comparison between full-step-every-frame and alternating
// full/lite stepping, with per-frame-type decode timing.
AsdResult evaluate_asd(const std::vector<Clip>& clips, const Params& params,
                       const Vocabulary& v, const PipelineConfig& pipe,
                       const RewardWeights& w);

}  // namespace maskplan
