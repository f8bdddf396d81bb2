#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "deffa/csa.hpp"
#include "deffa/imaging.hpp"
#include "deffa/invariant.hpp"
#include "deffa/losses.hpp"
#include "deffa/net.hpp"

namespace deffa {

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;  ///< L2 penalty added to the gradient
    int epochs = 30;
    int batch_size = 2;
    uint64_t seed = 0;
    Size2 image_size{128, 128};
    int checkpoint_every = 0;     ///< epochs between checkpoints; 0 disables
    int max_steps = 0;            ///< optimizer step cap; 0 means no cap
    double augment_prob = 0.0;    ///< per-sample chance of an online colour-statistics draw
    double val_fraction = 0.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;       ///< mean training loss over the epoch's steps
    double dice = 0.0;       ///< mean soft Dice loss over the same steps
    std::optional<double> val_loss;
    double learning_rate = 0.0;
    double wall_time = 0.0;  ///< seconds since training started
    int steps = 0;
};

void to_json(nlohmann::json& j, const EpochRecord& record);

struct TrainOptions {
    const ChannelStats* stats = nullptr;             ///< required when augment_prob > 0
    std::optional<std::filesystem::path> checkpoint_dir;
    nlohmann::json manifest = nlohmann::json::object();  ///< embedded in checkpoints
    std::function<void(const EpochRecord&)> on_epoch;
    /// Checked after each epoch (and its checkpoint); true ends training.
    std::function<bool(const EpochRecord&)> stop_after;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int steps = 0;
    std::vector<std::filesystem::path> checkpoints;
};

/// Network inputs for a list of samples.
struct Batch {
    torch::Tensor raw;        ///< (B,3,H,W)
    torch::Tensor invariant;  ///< (B,1,H,W)
    torch::Tensor target;     ///< (B,1,H,W) in {0,1}
};

Batch make_batch(std::span<const FundusSample> samples, const InvariantConfig& icfg);

/// Seeds the global generator, then builds the network, so identical seeds
/// give identical initial weights.
DeffaNet make_model(const ModelConfig& cfg, uint64_t seed);

/// Adam on the combined loss. Deterministic for a fixed seed: data order,
/// DropBlock masks and augmentation draws all derive from `tcfg.seed`.
TrainResult train(DeffaNet& net, const std::vector<FundusSample>& dataset, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const InvariantConfig& icfg, const TrainOptions& options = {});

/// Probability map for one sample (eval mode, no grad).
GrayField predict(DeffaNet& net, const FundusSample& sample, const InvariantConfig& icfg);

}  // namespace deffa
