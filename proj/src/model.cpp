#include "maskplan/model.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"
#include "model_internal.hpp"

namespace maskplan {

using detail::kMaskedScore;
using detail::kRmsEps;
using detail::rmsnorm;
using detail::softmax_rows;

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || embed_dim < heads)
        throw ConfigError("model: degenerate layer/head/width config");
    if (embed_dim % heads != 0)
        throw ConfigError("model: embed_dim must be divisible by heads");
    if (allow_full_action_ffn ? (action_ffn_dim > prompt_ffn_dim)
                              : (action_ffn_dim >= prompt_ffn_dim))
        throw ConfigError("model: action_ffn_dim must be smaller than prompt_ffn_dim");
    if (prompt_ffn_dim < 1 || action_ffn_dim < 1)
        throw ConfigError("model: FFN widths must be positive");
    if (grid_h % patch_h != 0 || grid_w % patch_w != 0)
        throw ConfigError("model: patch size must divide the grid");
    if (bins_x < 2 || bins_y < 2) throw ConfigError("model: need >= 2 bins per axis");
    if (grid_h != bins_y || grid_w != bins_x)
        throw ConfigError("model: raster grid must align with the coordinate lattice");
    if (n_instructions < 1) throw ConfigError("model: need instruction vocabulary");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"layers", layers},
            {"heads", heads},
            {"embed_dim", embed_dim},
            {"prompt_ffn_dim", prompt_ffn_dim},
            {"action_ffn_dim", action_ffn_dim},
            {"patch_h", patch_h},
            {"patch_w", patch_w},
            {"grid_h", grid_h},
            {"grid_w", grid_w},
            {"n_instructions", n_instructions},
            {"bins_x", bins_x},
            {"bins_y", bins_y},
            {"allow_full_action_ffn", allow_full_action_ffn}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.prompt_ffn_dim = j.at("prompt_ffn_dim").get<int>();
    c.action_ffn_dim = j.at("action_ffn_dim").get<int>();
    c.patch_h = j.at("patch_h").get<int>();
    c.patch_w = j.at("patch_w").get<int>();
    c.grid_h = j.at("grid_h").get<int>();
    c.grid_w = j.at("grid_w").get<int>();
    c.n_instructions = j.at("n_instructions").get<int>();
    c.bins_x = j.at("bins_x").get<int>();
    c.bins_y = j.at("bins_y").get<int>();
    c.allow_full_action_ffn = j.value("allow_full_action_ffn", false);
    c.validate();
    return c;
}

AttentionLayout AttentionLayout::build(int prompt_len, int action_len) {
    AttentionLayout l;
    l.prompt_len = prompt_len;
    l.action_len = action_len;
    const int n = prompt_len + action_len;
    l.allow.assign(static_cast<size_t>(n) * n, 0);
    for (int q = 0; q < n; ++q) {
        for (int k = 0; k < n; ++k) {
            bool a;
            if (q < prompt_len)
                a = (k <= q) && (k < prompt_len);  // causal prompt, blind to actions
            else
                a = true;  // action rows see the whole prompt and each other
            l.allow[q * n + k] = a ? 1 : 0;
        }
    }
    return l;
}

namespace {

Mat init_mat(int rows, int cols, Rng& rng, double scale) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, scale);
    return m;
}

}  // namespace

Params Params::init(const ModelConfig& cfg, Rng& rng, double scale) {
    cfg.validate();
    Params p;
    p.cfg = cfg;
    const int d = cfg.embed_dim;
    p.w_vis = init_mat(cfg.patch_dim(), d, rng, scale);
    p.b_vis = Mat::Zero(1, d);
    p.e_instr = init_mat(cfg.n_instructions, d, rng, scale);
    p.w_ego = init_mat(3, d, rng, scale);
    p.b_ego = Mat::Zero(1, d);
    p.e_tok = init_mat(cfg.total_tokens(), d, rng, scale);
    p.e_pos = init_mat(cfg.seq_len(), d, rng, scale);
    p.layers.resize(cfg.layers);
    for (auto& L : p.layers) {
        L.ln1_g = Mat::Ones(1, d);
        L.ln2_g = Mat::Ones(1, d);
        L.w_qkv = init_mat(d, 3 * d, rng, scale);
        L.b_qkv = Mat::Zero(1, 3 * d);
        L.w_out = init_mat(d, d, rng, scale);
        L.b_out = Mat::Zero(1, d);
        L.w_p1 = init_mat(d, cfg.prompt_ffn_dim, rng, scale);
        L.b_p1 = Mat::Zero(1, cfg.prompt_ffn_dim);
        L.w_p2 = init_mat(cfg.prompt_ffn_dim, d, rng, scale);
        L.b_p2 = Mat::Zero(1, d);
        L.w_a1 = init_mat(d, cfg.action_ffn_dim, rng, scale);
        L.b_a1 = Mat::Zero(1, cfg.action_ffn_dim);
        L.w_a2 = init_mat(cfg.action_ffn_dim, d, rng, scale);
        L.b_a2 = Mat::Zero(1, d);
    }
    p.lnf_g = Mat::Ones(1, d);
    p.w_head = init_mat(d, cfg.coord_vocab(), rng, scale);
    p.b_head = Mat::Zero(1, cfg.coord_vocab());
    p.w_goal = init_mat(d, cfg.bins_x + cfg.bins_y, rng, scale);
    p.b_goal = Mat::Zero(1, cfg.bins_x + cfg.bins_y);
    return p;
}

Params Params::zeros_like(const Params& other) {
    Params p = other;
    p.for_each([](const char*, Mat& m) { m.setZero(); });
    p.version = 0;
    return p;
}

int64_t Params::param_count() const {
    int64_t n = 0;
    for_each([&](const char*, const Mat& m) { n += m.size(); });
    return n;
}

Vec Params::pack() const {
    Vec flat(param_count());
    int64_t off = 0;
    for_each([&](const char*, const Mat& m) {
        flat.segment(off, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
        off += m.size();
    });
    return flat;
}

void Params::unpack(const Vec& flat) {
    if (flat.size() != param_count()) throw ContractError("params: flat size mismatch");
    int64_t off = 0;
    for_each([&](const char*, Mat& m) {
        Eigen::Map<Vec>(m.data(), m.size()) = flat.segment(off, m.size());
        off += m.size();
    });
}

void Params::add_scaled(const Params& other, double s) {
    int64_t i = 0;
    std::vector<const Mat*> theirs;
    other.for_each([&](const char*, const Mat& m) { theirs.push_back(&m); });
    for_each([&](const char*, Mat& m) { m += s * (*theirs[i++]); });
}

PromptInput encode_prompt(const Scene& scene, const ModelConfig& cfg) {
    if (scene.grid.height != cfg.grid_h || scene.grid.width != cfg.grid_w)
        throw ContractError("encode_prompt: scene grid does not match model config");
    std::vector<double> channels = raster_channels(scene);
    const int H = cfg.grid_h, W = cfg.grid_w;
    const size_t plane = static_cast<size_t>(H) * W;
    const int py = H / cfg.patch_h, px = W / cfg.patch_w;

    PromptInput in;
    in.patches.resize(cfg.vis_tokens(), cfg.patch_dim());
    int row = 0;
    for (int by = 0; by < py; ++by) {
        for (int bx = 0; bx < px; ++bx, ++row) {
            int col = 0;
            for (int c = 0; c < 3; ++c)
                for (int iy = 0; iy < cfg.patch_h; ++iy)
                    for (int ix = 0; ix < cfg.patch_w; ++ix) {
                        int gy = by * cfg.patch_h + iy;
                        int gx = bx * cfg.patch_w + ix;
                        in.patches(row, col++) = channels[c * plane + gy * W + gx];
                    }
        }
    }
    in.instruction = static_cast<int>(scene.instruction);
    // Fixed feature scaling keeps raw kinematics near unit magnitude.
    in.ego = Eigen::Vector3d(scene.ego.speed * 0.1, scene.ego.accel / 3.0,
                             scene.ego.yaw_rate * 2.0);
    return in;
}

namespace {

void rmsnorm_backward(const Mat& x, const Mat& g, const Vec& rms, const Mat& dy,
                      Mat& dx, Mat& dg) {
    const int d = static_cast<int>(x.cols());
    dx.resize(x.rows(), d);
    for (int r = 0; r < x.rows(); ++r) {
        double rr = rms(r);
        Eigen::RowVectorXd u = dy.row(r).cwiseProduct(g.row(0));
        double dot = u.dot(x.row(r));
        dx.row(r) = u / rr - x.row(r) * (dot / (d * rr * rr * rr));
        dg.row(0) += dy.row(r).cwiseProduct(x.row(r)) / rr;
    }
}

}  // namespace

void forward(const Params& params, const PromptInput& prompt, const TokenSequence& tokens,
             const AttentionLayout& layout, Tape& tape) {
    const ModelConfig& cfg = params.cfg;
    const int d = cfg.embed_dim;
    const int P = cfg.prompt_len();
    const int S = cfg.seq_len();
    const int nv = cfg.vis_tokens();
    const int dh = cfg.head_dim();
    if (prompt.patches.rows() != nv || prompt.patches.cols() != cfg.patch_dim())
        throw ContractError("forward: prompt patch shape mismatch");
    if (prompt.instruction < 0 || prompt.instruction >= cfg.n_instructions)
        throw ContractError("forward: instruction id out of range");
    if (layout.size() != S || layout.prompt_len != P)
        throw ContractError("forward: attention layout mismatch");

    tape.prompt = prompt;
    tape.tokens = tokens;

    Mat& x0 = tape.x0;
    x0.resize(S, d);
    x0.topRows(nv) = prompt.patches * params.w_vis;
    x0.topRows(nv).rowwise() += params.b_vis.row(0);
    x0.row(nv) = params.e_instr.row(prompt.instruction);
    x0.row(nv + 1) = prompt.ego.transpose() * params.w_ego + params.b_ego.row(0);
    for (int i = 0; i < kActionLen; ++i) {
        int32_t tok = tokens[i];
        if (tok < 0 || tok >= cfg.total_tokens())
            throw ContractError("forward: token id out of range");
        x0.row(P + i) = params.e_tok.row(tok);
    }
    x0 += params.e_pos;

    tape.layers.resize(cfg.layers);
    Mat x = x0;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams& L = params.layers[l];
        LayerTape& T = tape.layers[l];
        T.x_in = x;
        rmsnorm(T.x_in, L.ln1_g, T.n1, T.rms1);

        Mat qkv = T.n1 * L.w_qkv;
        qkv.rowwise() += L.b_qkv.row(0);
        T.q = qkv.leftCols(d);
        T.k = qkv.middleCols(d, d);
        T.v = qkv.rightCols(d);

        T.att.assign(cfg.heads, Mat());
        T.ctx.resize(S, d);
        for (int h = 0; h < cfg.heads; ++h) {
            auto qh = T.q.middleCols(h * dh, dh);
            auto kh = T.k.middleCols(h * dh, dh);
            auto vh = T.v.middleCols(h * dh, dh);
            Mat scores = qh * kh.transpose() * scale;
            for (int qi = 0; qi < S; ++qi)
                for (int ki = 0; ki < S; ++ki)
                    if (!layout.allow[qi * S + ki]) scores(qi, ki) = kMaskedScore;
            softmax_rows(scores);
            T.att[h] = std::move(scores);
            T.ctx.middleCols(h * dh, dh) = T.att[h] * vh;
        }

        Mat proj = T.ctx * L.w_out;
        proj.rowwise() += L.b_out.row(0);
        T.x_mid = T.x_in + proj;

        rmsnorm(T.x_mid, L.ln2_g, T.n2, T.rms2);
        T.hp = (T.n2.topRows(P) * L.w_p1).rowwise() + L.b_p1.row(0);
        T.hp = T.hp.cwiseMax(0.0);
        T.ha = (T.n2.bottomRows(kActionLen) * L.w_a1).rowwise() + L.b_a1.row(0);
        T.ha = T.ha.cwiseMax(0.0);

        x = T.x_mid;
        x.topRows(P) += (T.hp * L.w_p2).rowwise() + L.b_p2.row(0);
        x.bottomRows(kActionLen) += (T.ha * L.w_a2).rowwise() + L.b_a2.row(0);
    }

    tape.x_last = x;
    rmsnorm(tape.x_last, params.lnf_g, tape.xf, tape.rmsf);
    tape.logits = tape.xf.bottomRows(kActionLen) * params.w_head;
    tape.logits.rowwise() += params.b_head.row(0);
    tape.goal_logits = tape.xf.row(P - 1) * params.w_goal + params.b_goal;
}

void backward(const Params& params, const AttentionLayout& layout, const Tape& tape,
              const Mat& d_logits, const Mat& d_goal, Params& grads) {
    (void)layout;  // masked attention entries carry zero probability already
    const ModelConfig& cfg = params.cfg;
    const int d = cfg.embed_dim;
    const int P = cfg.prompt_len();
    const int S = cfg.seq_len();
    const int nv = cfg.vis_tokens();
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat dxf = Mat::Zero(S, d);
    dxf.bottomRows(kActionLen) += d_logits * params.w_head.transpose();
    grads.w_head += tape.xf.bottomRows(kActionLen).transpose() * d_logits;
    grads.b_head += d_logits.colwise().sum();
    if (d_goal.size() > 0) {
        dxf.row(P - 1) += (d_goal * params.w_goal.transpose()).row(0);
        grads.w_goal += tape.xf.row(P - 1).transpose() * d_goal;
        grads.b_goal += d_goal;
    }

    Mat dx;
    rmsnorm_backward(tape.x_last, params.lnf_g, tape.rmsf, dxf, dx, grads.lnf_g);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerParams& L = params.layers[l];
        const LayerTape& T = tape.layers[l];
        LayerParams& G = grads.layers[l];

        // FFN (split branches), residual into x_mid.
        Mat dn2 = Mat::Zero(S, d);
        {
            Mat dfp = dx.topRows(P);
            Mat dhp = dfp * L.w_p2.transpose();
            G.w_p2 += T.hp.transpose() * dfp;
            G.b_p2 += dfp.colwise().sum();
            dhp = dhp.cwiseProduct((T.hp.array() > 0.0).cast<double>().matrix());
            dn2.topRows(P) = dhp * L.w_p1.transpose();
            G.w_p1 += T.n2.topRows(P).transpose() * dhp;
            G.b_p1 += dhp.colwise().sum();

            Mat dfa = dx.bottomRows(kActionLen);
            Mat dha = dfa * L.w_a2.transpose();
            G.w_a2 += T.ha.transpose() * dfa;
            G.b_a2 += dfa.colwise().sum();
            dha = dha.cwiseProduct((T.ha.array() > 0.0).cast<double>().matrix());
            dn2.bottomRows(kActionLen) = dha * L.w_a1.transpose();
            G.w_a1 += T.n2.bottomRows(kActionLen).transpose() * dha;
            G.b_a1 += dha.colwise().sum();
        }
        Mat dx_mid;
        rmsnorm_backward(T.x_mid, L.ln2_g, T.rms2, dn2, dx_mid, G.ln2_g);
        dx_mid += dx;

        // Attention, residual into x_in.
        Mat dctx = dx_mid * L.w_out.transpose();
        G.w_out += T.ctx.transpose() * dx_mid;
        G.b_out += dx_mid.colwise().sum();

        Mat dqkv = Mat::Zero(S, 3 * d);
        for (int h = 0; h < cfg.heads; ++h) {
            auto vh = T.v.middleCols(h * dh, dh);
            auto qh = T.q.middleCols(h * dh, dh);
            auto kh = T.k.middleCols(h * dh, dh);
            Mat dctx_h = dctx.middleCols(h * dh, dh);
            Mat datt = dctx_h * vh.transpose();
            dqkv.middleCols(2 * d + h * dh, dh) = T.att[h].transpose() * dctx_h;
            // Softmax backward; masked entries have zero probability.
            Vec rowdot = (datt.cwiseProduct(T.att[h])).rowwise().sum();
            Mat ds = T.att[h].cwiseProduct(datt.colwise() - rowdot);
            dqkv.middleCols(h * dh, dh) = ds * kh * scale;
            dqkv.middleCols(d + h * dh, dh) = ds.transpose() * qh * scale;
        }

        Mat dn1 = dqkv * L.w_qkv.transpose();
        G.w_qkv += T.n1.transpose() * dqkv;
        G.b_qkv += dqkv.colwise().sum();

        Mat dx_in;
        rmsnorm_backward(T.x_in, L.ln1_g, T.rms1, dn1, dx_in, G.ln1_g);
        dx = dx_mid + dx_in;
    }

    // Embeddings.
    grads.e_pos += dx;
    for (int i = 0; i < kActionLen; ++i)
        grads.e_tok.row(tape.tokens[i]) += dx.row(P + i);
    grads.w_ego += tape.prompt.ego * dx.row(nv + 1);
    grads.b_ego += dx.row(nv + 1);
    grads.e_instr.row(tape.prompt.instruction) += dx.row(nv);
    grads.w_vis += tape.prompt.patches.transpose() * dx.topRows(nv);
    grads.b_vis += dx.topRows(nv).colwise().sum();
}

Mat predict_logits(const TokenSequence& x, const PromptInput& prompt, const Params& params) {
    AttentionLayout layout = AttentionLayout::build(params.cfg.prompt_len(), kActionLen);
    Tape tape;
    forward(params, prompt, x, layout, tape);
    return tape.logits;
}

Mat goal_logits(const PromptInput& prompt, const Params& params) {
    AttentionLayout layout = AttentionLayout::build(params.cfg.prompt_len(), kActionLen);
    Tape tape;
    TokenSequence masked;
    masked.tokens.fill(params.cfg.coord_vocab());  // [MASK]
    forward(params, prompt, masked, layout, tape);
    return tape.goal_logits;
}

TokenSequence forward_mask(const TokenSequence& x0, double t, Rng& rng, const Vocabulary& v) {
    if (!(t >= 0.0 && t <= 1.0)) throw RangeError("forward_mask: t must lie in [0,1]");
    if (count_masks(x0, v) > 0) throw ContractError("forward_mask: input already masked");
    TokenSequence out = x0;
    for (int i = 0; i < kActionLen; ++i)
        if (rng.uniform() < t) out[i] = v.mask_token();
    return out;
}

AxisChoice axis_argmax(const Mat& logits, int pos, const Vocabulary& v) {
    auto [lo, hi] = v.axis_range(pos);
    int best = lo;
    for (int t = lo + 1; t < hi; ++t)
        if (logits(pos, t) > logits(pos, best)) best = t;
    return {static_cast<int32_t>(best), axis_prob(logits, pos, best, v)};
}

AxisChoice axis_sample(const Mat& logits, int pos, const Vocabulary& v, Rng& rng) {
    auto [lo, hi] = v.axis_range(pos);
    double mx = -1e300;
    for (int t = lo; t < hi; ++t) mx = std::max(mx, logits(pos, t));
    double z = 0.0;
    for (int t = lo; t < hi; ++t) z += std::exp(logits(pos, t) - mx);
    double u = rng.uniform() * z;
    double acc = 0.0;
    int chosen = hi - 1;
    for (int t = lo; t < hi; ++t) {
        acc += std::exp(logits(pos, t) - mx);
        if (u < acc) {
            chosen = t;
            break;
        }
    }
    return {static_cast<int32_t>(chosen),
            std::exp(logits(pos, chosen) - mx) / z};
}

double axis_prob(const Mat& logits, int pos, int32_t token, const Vocabulary& v) {
    auto [lo, hi] = v.axis_range(pos);
    if (token < lo || token >= hi) throw ContractError("axis_prob: token outside axis range");
    double mx = -1e300;
    for (int t = lo; t < hi; ++t) mx = std::max(mx, logits(pos, t));
    double z = 0.0;
    for (int t = lo; t < hi; ++t) z += std::exp(logits(pos, t) - mx);
    return std::exp(logits(pos, token) - mx) / z;
}

}  // namespace maskplan
