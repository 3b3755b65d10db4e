#include "maskplan/runtime.hpp"

#include <algorithm>
#include <cmath>

#include "maskplan/errors.hpp"
#include "model_internal.hpp"

namespace maskplan {

using detail::rmsnorm;
using detail::softmax_rows;

PrefixCache prefill_prefix(const PromptInput& prompt, const Params& params) {
    const ModelConfig& cfg = params.cfg;
    const int d = cfg.embed_dim;
    const int P = cfg.prompt_len();
    const int nv = cfg.vis_tokens();
    const int dh = cfg.head_dim();
    if (prompt.patches.rows() != nv || prompt.patches.cols() != cfg.patch_dim())
        throw ContractError("prefill_prefix: prompt patch shape mismatch");

    PrefixCache cache;
    cache.prompt_len = P;
    cache.params_version = params.version;
    cache.k.reserve(cfg.layers);
    cache.v.reserve(cfg.layers);

    Mat x(P, d);
    x.topRows(nv) = prompt.patches * params.w_vis;
    x.topRows(nv).rowwise() += params.b_vis.row(0);
    x.row(nv) = params.e_instr.row(prompt.instruction);
    x.row(nv + 1) = prompt.ego.transpose() * params.w_ego + params.b_ego.row(0);
    x += params.e_pos.topRows(P);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat n1, n2;
    Vec rms;
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams& L = params.layers[l];
        rmsnorm(x, L.ln1_g, n1, rms);
        Mat qkv = n1 * L.w_qkv;
        qkv.rowwise() += L.b_qkv.row(0);
        Mat k = qkv.middleCols(d, d);
        Mat v = qkv.rightCols(d);

        Mat ctx(P, d);
        for (int h = 0; h < cfg.heads; ++h) {
            auto qh = qkv.middleCols(h * dh, dh);
            auto kh = k.middleCols(h * dh, dh);
            auto vh = v.middleCols(h * dh, dh);
            Mat scores = qh * kh.transpose() * scale;
            for (int qi = 0; qi < P; ++qi)
                for (int ki = qi + 1; ki < P; ++ki) scores(qi, ki) = detail::kMaskedScore;
            softmax_rows(scores);
            ctx.middleCols(h * dh, dh) = scores * vh;
        }
        Mat proj = ctx * L.w_out;
        proj.rowwise() += L.b_out.row(0);
        Mat x_mid = x + proj;

        rmsnorm(x_mid, L.ln2_g, n2, rms);
        Mat hp = (n2 * L.w_p1).rowwise() + L.b_p1.row(0);
        hp = hp.cwiseMax(0.0);
        x = x_mid + ((hp * L.w_p2).rowwise() + L.b_p2.row(0));

        cache.k.push_back(std::move(k));
        cache.v.push_back(std::move(v));
    }

    Mat xf;
    rmsnorm(x, params.lnf_g, xf, rms);
    cache.goal_logits = xf.row(P - 1) * params.w_goal + params.b_goal;
    return cache;
}

Mat decode_action_block(const PrefixCache& cache, const TokenSequence& x,
                        const Params& params) {
    const ModelConfig& cfg = params.cfg;
    if (cache.params_version != params.version)
        throw StaleCacheError("decode_action_block: cache built from different params");
    if (cache.prompt_len != cfg.prompt_len() ||
        static_cast<int>(cache.k.size()) != cfg.layers)
        throw StaleCacheError("decode_action_block: cache shape mismatch");

    const int d = cfg.embed_dim;
    const int P = cfg.prompt_len();
    const int dh = cfg.head_dim();
    const int A = kActionLen;

    Mat xa(A, d);
    for (int i = 0; i < A; ++i) {
        int32_t tok = x[i];
        if (tok < 0 || tok >= cfg.total_tokens())
            throw ContractError("decode_action_block: token id out of range");
        xa.row(i) = params.e_tok.row(tok);
    }
    xa += params.e_pos.middleRows(P, A);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat n1, n2;
    Vec rms;
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams& L = params.layers[l];
        rmsnorm(xa, L.ln1_g, n1, rms);
        Mat qkv = n1 * L.w_qkv;
        qkv.rowwise() += L.b_qkv.row(0);
        auto ka = qkv.middleCols(d, d);
        auto va = qkv.rightCols(d);

        Mat ctx(A, d);
        for (int h = 0; h < cfg.heads; ++h) {
            auto qh = qkv.middleCols(h * dh, dh);
            // Keys/values: cached prompt span first, fresh action span after.
            Mat scores(A, P + A);
            scores.leftCols(P) = qh * cache.k[l].middleCols(h * dh, dh).transpose() * scale;
            scores.rightCols(A) = qh * ka.middleCols(h * dh, dh).transpose() * scale;
            softmax_rows(scores);
            ctx.middleCols(h * dh, dh) =
                scores.leftCols(P) * cache.v[l].middleCols(h * dh, dh) +
                scores.rightCols(A) * va.middleCols(h * dh, dh);
        }
        Mat proj = ctx * L.w_out;
        proj.rowwise() += L.b_out.row(0);
        Mat x_mid = xa + proj;

        rmsnorm(x_mid, L.ln2_g, n2, rms);
        Mat ha = (n2 * L.w_a1).rowwise() + L.b_a1.row(0);
        ha = ha.cwiseMax(0.0);
        xa = x_mid + ((ha * L.w_a2).rowwise() + L.b_a2.row(0));
    }

    Mat xf;
    rmsnorm(xa, params.lnf_g, xf, rms);
    Mat logits = xf * params.w_head;
    logits.rowwise() += params.b_head.row(0);
    return logits;
}

std::vector<Mat> decode_action_batch(PrefixCache& cache, std::span<const TokenSequence> blocks,
                                     const Params& params) {
    cache.state = blocks.size() > 1 ? CacheState::Batch : CacheState::Single;
    std::vector<Mat> out;
    out.reserve(blocks.size());
    for (const auto& b : blocks) out.push_back(decode_action_block(cache, b, params));
    return out;
}

namespace {

struct ScoredPos {
    double prob = 0.0;
    int32_t token = 0;
    int pos = 0;
};

// Draft ranks best-first (prob desc); edit ranks worst-first (prob asc).
// Ties break by token id, then position, ascending.
bool ranks_before(const ScoredPos& a, const ScoredPos& b, CommitMode mode) {
    if (a.prob != b.prob)
        return mode == CommitMode::Draft ? a.prob > b.prob : a.prob < b.prob;
    if (a.token != b.token) return a.token < b.token;
    return a.pos < b.pos;
}

bool eligible(const TokenSequence& x, int pos, CommitMode mode, const Vocabulary& v,
              bool edit_goal) {
    if (mode == CommitMode::Draft) return x[pos] == v.mask_token();
    if (!edit_goal && (pos == kGoalX || pos == kGoalY)) return false;
    return true;
}

// Argmax token and its axis-restricted softmax probability, computed inline
// from the logits row.
ScoredPos score_position(const Mat& logits, int pos, const Vocabulary& v) {
    auto [lo, hi] = v.axis_range(pos);
    int best = lo;
    double mx = logits(pos, lo);
    for (int t = lo + 1; t < hi; ++t) {
        if (logits(pos, t) > mx) {
            mx = logits(pos, t);
            best = t;
        }
    }
    double z = 0.0;
    for (int t = lo; t < hi; ++t) z += std::exp(logits(pos, t) - mx);
    return {1.0 / z, static_cast<int32_t>(best), pos};
}

void check_commit_contract(const Mat& logits, const TokenSequence& x, int n_commit,
                           CommitMode mode, const Vocabulary& v, bool edit_goal) {
    if (logits.rows() != kActionLen || logits.cols() != v.coord_vocab())
        throw ContractError("select_commit: logits shape mismatch");
    if (n_commit < 0) throw ContractError("select_commit: negative commit count");
    int n_eligible = 0;
    for (int pos = 0; pos < kActionLen; ++pos) {
        if (mode == CommitMode::Edit && x[pos] == v.mask_token())
            throw ContractError("select_commit: edit mode requires a concrete sequence");
        n_eligible += eligible(x, pos, mode, v, edit_goal);
    }
    if (n_commit > n_eligible)
        throw ContractError("select_commit: commit count exceeds eligible positions");
}

}  // namespace

TokenSequence fused_select_commit(const Mat& logits, const TokenSequence& x, int n_commit,
                                  CommitMode mode, const Vocabulary& v, bool edit_goal,
                                  std::array<uint8_t, kActionLen>* mask_out) {
    check_commit_contract(logits, x, n_commit, mode, v, edit_goal);
    TokenSequence out = x;
    if (mask_out) mask_out->fill(0);
    if (n_commit == 0) return out;

    // Bounded insertion buffer; one pass over positions, no allocation.
    std::array<ScoredPos, kActionLen> sel;
    int sel_n = 0;
    for (int pos = 0; pos < kActionLen; ++pos) {
        if (!eligible(x, pos, mode, v, edit_goal)) continue;
        ScoredPos c = score_position(logits, pos, v);
        if (sel_n < n_commit) {
            int i = sel_n++;
            while (i > 0 && ranks_before(c, sel[i - 1], mode)) {
                sel[i] = sel[i - 1];
                --i;
            }
            sel[i] = c;
        } else if (ranks_before(c, sel[n_commit - 1], mode)) {
            int i = n_commit - 1;
            while (i > 0 && ranks_before(c, sel[i - 1], mode)) {
                sel[i] = sel[i - 1];
                --i;
            }
            sel[i] = c;
        }
    }
    for (int i = 0; i < n_commit; ++i) {
        if (out[sel[i].pos] != sel[i].token) {
            out[sel[i].pos] = sel[i].token;
            if (mask_out) (*mask_out)[sel[i].pos] = 1;
        }
    }
    return out;
}

TokenSequence reference_select_commit(const Mat& logits, const TokenSequence& x, int n_commit,
                                      CommitMode mode, const Vocabulary& v, bool edit_goal,
                                      std::array<uint8_t, kActionLen>* mask_out) {
    check_commit_contract(logits, x, n_commit, mode, v, edit_goal);
    std::vector<ScoredPos> cands;
    for (int pos = 0; pos < kActionLen; ++pos)
        if (eligible(x, pos, mode, v, edit_goal)) cands.push_back(score_position(logits, pos, v));
    std::sort(cands.begin(), cands.end(),
              [mode](const ScoredPos& a, const ScoredPos& b) { return ranks_before(a, b, mode); });
    TokenSequence out = x;
    if (mask_out) mask_out->fill(0);
    for (int i = 0; i < n_commit; ++i) {
        if (out[cands[i].pos] != cands[i].token) {
            out[cands[i].pos] = cands[i].token;
            if (mask_out) (*mask_out)[cands[i].pos] = 1;
        }
    }
    return out;
}

}  // namespace maskplan
