#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "deffa/csa.hpp"
#include "deffa/evaluate.hpp"
#include "deffa/invariant.hpp"
#include "deffa/losses.hpp"
#include "deffa/net.hpp"
#include "deffa/train.hpp"

namespace deffa {

/// Every tunable of the pipeline. Loaded from an INI file with one section
/// per stage ([invariant], [model], [train], [loss], [balance], [augment],
/// [eval]); command-line flags use the same key names.
struct PipelineConfig {
    InvariantConfig invariant;
    ModelConfig model;
    TrainConfig train;
    LossConfig loss;
    int k_max = 0;           ///< 0 picks min(10, N-1)
    uint64_t balance_seed = 0;
    AugmentConfig augment;
    int augment_count = 1;
    EvalOptions eval;

    void validate() const;
};

/// Parses "128x128", "128,128" or "128".
Size2 parse_size(const std::string& text);

/// Keys absent from the file keep their defaults. Unknown sections or keys
/// are rejected so typos do not pass silently.
PipelineConfig load_config(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const PipelineConfig& cfg);

}  // namespace deffa
