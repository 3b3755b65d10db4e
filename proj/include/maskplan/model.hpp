#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "maskplan/rng.hpp"
#include "maskplan/scene_sim.hpp"
#include "maskplan/trajectory_codec.hpp"

namespace maskplan {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Bidirectional transformer over [prompt | action block]. The prompt is the
// rasterized scene (patch tokens), one instruction token, and one ego-state
// token; the action block is the 16-token trajectory sequence. Prompt rows
// attend causally, action rows attend everywhere, prompt rows never see the
// action block (so prompt state is cacheable across decodes).
struct ModelConfig {
    int layers = 3;
    int heads = 4;
    int embed_dim = 96;
    int prompt_ffn_dim = 384;
    int action_ffn_dim = 160;  // compact action-expert branch
    int patch_h = 16;
    int patch_w = 16;
    int grid_h = 64;   // must equal bins_y (shared lattice with the cost grid)
    int grid_w = 128;  // must equal bins_x
    int n_instructions = 4;
    int bins_x = 128;
    int bins_y = 64;
    // Escape hatch for the full-width action-FFN ablation; default configs
    // keep the compact-branch invariant strict.
    bool allow_full_action_ffn = false;

    int coord_vocab() const { return bins_x + bins_y; }
    int total_tokens() const { return coord_vocab() + 1; }  // + [MASK]
    int head_dim() const { return embed_dim / heads; }
    int vis_tokens() const { return (grid_h / patch_h) * (grid_w / patch_w); }
    int prompt_len() const { return vis_tokens() + 2; }  // + instruction + ego
    int seq_len() const { return prompt_len() + kActionLen; }
    int patch_dim() const { return 3 * patch_h * patch_w; }

    void validate() const;  // throws ConfigError
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    bool operator==(const ModelConfig&) const = default;
};

// Boolean allow-matrix over (query position, key position).
struct AttentionLayout {
    int prompt_len = 0;
    int action_len = 0;
    std::vector<uint8_t> allow;  // row-major (seq x seq)

    static AttentionLayout build(int prompt_len, int action_len);
    int size() const { return prompt_len + action_len; }
    bool allowed(int q, int k) const { return allow[q * size() + k] != 0; }
};

struct LayerParams {
    Mat ln1_g, ln2_g;          // 1 x d
    Mat w_qkv, b_qkv;          // d x 3d, 1 x 3d
    Mat w_out, b_out;          // d x d, 1 x d
    Mat w_p1, b_p1, w_p2, b_p2;  // prompt FFN
    Mat w_a1, b_a1, w_a2, b_a2;  // action-expert FFN
};

struct Params {
    ModelConfig cfg;
    Mat w_vis, b_vis;   // patch_dim x d
    Mat e_instr;        // n_instructions x d
    Mat w_ego, b_ego;   // 3 x d
    Mat e_tok;          // total_tokens x d
    Mat e_pos;          // seq_len x d
    std::vector<LayerParams> layers;
    Mat lnf_g;          // 1 x d
    Mat w_head, b_head;  // d x coord_vocab
    Mat w_goal, b_goal;  // d x (bins_x + bins_y)
    // Monotone stamp; bumped on every optimizer step or load so caches can
    // detect staleness.
    uint64_t version = 0;

    static Params init(const ModelConfig& cfg, Rng& rng, double scale = 0.02);
    static Params zeros_like(const Params& other);

    template <typename F>
    void for_each(F&& f) {
        f("w_vis", w_vis); f("b_vis", b_vis);
        f("e_instr", e_instr);
        f("w_ego", w_ego); f("b_ego", b_ego);
        f("e_tok", e_tok);
        f("e_pos", e_pos);
        for (size_t l = 0; l < layers.size(); ++l) {
            auto& L = layers[l];
            std::string p = "layer" + std::to_string(l) + ".";
            f((p + "ln1_g").c_str(), L.ln1_g);
            f((p + "w_qkv").c_str(), L.w_qkv); f((p + "b_qkv").c_str(), L.b_qkv);
            f((p + "w_out").c_str(), L.w_out); f((p + "b_out").c_str(), L.b_out);
            f((p + "ln2_g").c_str(), L.ln2_g);
            f((p + "w_p1").c_str(), L.w_p1); f((p + "b_p1").c_str(), L.b_p1);
            f((p + "w_p2").c_str(), L.w_p2); f((p + "b_p2").c_str(), L.b_p2);
            f((p + "w_a1").c_str(), L.w_a1); f((p + "b_a1").c_str(), L.b_a1);
            f((p + "w_a2").c_str(), L.w_a2); f((p + "b_a2").c_str(), L.b_a2);
        }
        f("lnf_g", lnf_g);
        f("w_head", w_head); f("b_head", b_head);
        f("w_goal", w_goal); f("b_goal", b_goal);
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<Params*>(this)->for_each(
            [&](const char* n, Mat& m) { f(n, static_cast<const Mat&>(m)); });
    }

    int64_t param_count() const;
    Vec pack() const;
    void unpack(const Vec& flat);
    void add_scaled(const Params& other, double s);
};

// Scene conditioning, already projected to model-ready features.
struct PromptInput {
    Mat patches;          // vis_tokens x patch_dim
    int instruction = 0;
    Eigen::Vector3d ego;  // scaled (speed, accel, yaw_rate)
};

PromptInput encode_prompt(const Scene& scene, const ModelConfig& cfg);

// Forward-pass activations retained for the backward pass.
struct LayerTape {
    Mat x_in, n1;
    Vec rms1, rms2;
    Mat q, k, v;                // seq x d, heads packed
    std::vector<Mat> att;       // per head, seq x seq
    Mat ctx, x_mid, n2;
    Mat hp, ha;                 // post-ReLU hidden (prompt rows / action rows)
};

struct Tape {
    Mat x0;
    std::vector<LayerTape> layers;
    Mat x_last;
    Vec rmsf;
    Mat xf;
    Mat logits;       // kActionLen x coord_vocab
    Mat goal_logits;  // 1 x (bins_x + bins_y)
    PromptInput prompt;
    TokenSequence tokens;
};

// Full forward over [prompt | action block]. Writes activations into `tape`.
void forward(const Params& params, const PromptInput& prompt, const TokenSequence& tokens,
             const AttentionLayout& layout, Tape& tape);

// Accumulates parameter gradients for upstream gradients d_logits (action
// head) and d_goal (goal head; pass a zero matrix when unused).
void backward(const Params& params, const AttentionLayout& layout, const Tape& tape,
              const Mat& d_logits, const Mat& d_goal, Params& grads);

// Convenience inference wrapper: per-position logits over the coordinate
// vocabulary (kActionLen x coord_vocab) for a possibly partially masked block.
Mat predict_logits(const TokenSequence& x, const PromptInput& prompt, const Params& params);

// Joint goal posterior inputs: factorized logits (1 x bins_x + bins_y) from
// the last prompt position.
Mat goal_logits(const PromptInput& prompt, const Params& params);

// Replaces each token with [MASK] independently with probability t.
// Throws RangeError for t outside [0,1], ContractError if x0 already has masks.
TokenSequence forward_mask(const TokenSequence& x0, double t, Rng& rng, const Vocabulary& v);

// Distribution helpers over the axis-appropriate sub-vocabulary of a position
// (x tokens at even positions, y tokens at odd ones).
struct AxisChoice {
    int32_t token = 0;
    double prob = 0.0;
};
AxisChoice axis_argmax(const Mat& logits, int pos, const Vocabulary& v);
AxisChoice axis_sample(const Mat& logits, int pos, const Vocabulary& v, Rng& rng);
// Probability of a specific token under the axis-restricted softmax.
double axis_prob(const Mat& logits, int pos, int32_t token, const Vocabulary& v);

}  // namespace maskplan
