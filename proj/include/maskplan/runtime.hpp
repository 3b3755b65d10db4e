#pragma once

#include <array>
#include <span>
#include <vector>

#include "maskplan/model.hpp"

namespace maskplan {

enum class CacheState { Single, Batch };

// Per-layer attention key/value tensors for the prompt span. Action positions
// are never cached: every decode recomputes the mutable action block against
// this fixed prefix, which is the rewind contract.
struct PrefixCache {
    std::vector<Mat> k, v;   // per layer, prompt_len x embed_dim
    Mat goal_logits;         // produced in the same pass (merged keypoint inference)
    int prompt_len = 0;
    CacheState state = CacheState::Single;
    uint64_t params_version = 0;
};

// One causal pass over the prompt; fills the cache and the goal posterior.
PrefixCache prefill_prefix(const PromptInput& prompt, const Params& params);

// Recomputes only the action rows (queries over cached prompt KV plus fresh
// action KV). Throws StaleCacheError if the cache was built from different
// parameters. Returns kActionLen x coord_vocab logits.
Mat decode_action_block(const PrefixCache& cache, const TokenSequence& x, const Params& params);

// Decodes several action blocks against one shared prefix (Batch cache state;
// the prompt KV is stored once and broadcast).
std::vector<Mat> decode_action_batch(PrefixCache& cache, std::span<const TokenSequence> blocks,
                                     const Params& params);

enum class CommitMode { Draft, Edit };

// Single-pass select-rank-commit token update.
//
// Draft mode scores each masked position with its axis-argmax probability and
// commits the n_commit highest-confidence predictions. Edit mode scores each
// eligible concrete position the same way and rewrites the n_commit
// lowest-confidence ones with their argmax replacement; goal positions are
// eligible only when edit_goal is set. Ties break by (token id, position)
// ascending. `mask_out` receives a 1 at every position whose token actually
// changed.
TokenSequence fused_select_commit(const Mat& logits, const TokenSequence& x, int n_commit,
                                  CommitMode mode, const Vocabulary& v, bool edit_goal = false,
                                  std::array<uint8_t, kActionLen>* mask_out = nullptr);

// Reference three-step path (score, rank, write) used as the equivalence
// oracle and as the unfused benchmark baseline.
TokenSequence reference_select_commit(const Mat& logits, const TokenSequence& x, int n_commit,
                                      CommitMode mode, const Vocabulary& v, bool edit_goal = false,
                                      std::array<uint8_t, kActionLen>* mask_out = nullptr);

}  // namespace maskplan
