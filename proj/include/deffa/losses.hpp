#pragma once

#include <torch/torch.h>

namespace deffa {

struct LossConfig {
    double alpha = 0.25;       ///< BCE weight in the combined loss
    double smooth = 1.0;       ///< Dice smoothing
    double prob_clamp = 1e-7;  ///< log-argument clamp for BCE

    void validate() const;
};

/// Mean pixelwise binary cross-entropy on clamped probabilities.
torch::Tensor bce_loss(const torch::Tensor& pr, const torch::Tensor& gt, const LossConfig& cfg = {});

/// Soft Dice loss pooled over every element of the tensors.
torch::Tensor dice_loss(const torch::Tensor& pr, const torch::Tensor& gt, const LossConfig& cfg = {});

/// alpha * BCE + (1 - alpha) * Dice.
torch::Tensor combined_loss(const torch::Tensor& pr, const torch::Tensor& gt, const LossConfig& cfg = {});

}  // namespace deffa
