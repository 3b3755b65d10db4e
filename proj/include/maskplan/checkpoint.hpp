#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "maskplan/model.hpp"

namespace maskplan {

// Versioned binary container: magic + JSON header (model config, vocabulary,
// free-form metadata) + flat double payload (parameters, then optional Adam
// state for exact training resume).
struct Checkpoint {
    ModelConfig config;
    Vocabulary vocab;
    Params params;
    bool has_opt = false;
    Vec adam_m, adam_v;
    int64_t adam_t = 0;
    int64_t step = 0;
    nlohmann::json meta;  // run-config hash, stage tag, etc.
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over a file's bytes; embedded in downstream reports.
uint64_t file_hash(const std::string& path);

// Canonical hash of a JSON document (hash of its compact dump).
uint64_t json_hash(const nlohmann::json& j);

}  // namespace maskplan
