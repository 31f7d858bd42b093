#pragma once

#include "slm/evaluator.hpp"
#include "slm/model.hpp"
#include "slm/trainer.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace slm {

// Resolved run configuration: model, training, decoding and scoring knobs.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DecodeOptions decode;
    ScoreOptions eval;
    nlohmann::json raw; // canonical document (sorted keys)

    std::string canonical_text() const;
    uint64_t config_hash() const;
};

nlohmann::json default_config_json();
RunConfig run_config_from_json(const nlohmann::json & j);
RunConfig load_run_config(const std::string & path);

// Applies a "dotted.path=value" override in place. Values parse as JSON when
// possible, otherwise as a plain string.
void apply_override(nlohmann::json & j, const std::string & assignment);

// SLM_SEED environment variable, when set, overrides train.seed. Explicit
// --set overrides applied afterwards still win.
void merge_env_seed(nlohmann::json & j);

} // namespace slm
