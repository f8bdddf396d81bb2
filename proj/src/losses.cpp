#include "deffa/losses.hpp"

#include "deffa/errors.hpp"

namespace deffa {

namespace {

void check_shapes(const torch::Tensor& pr, const torch::Tensor& gt)
{
    if (pr.sizes() != gt.sizes())
        throw ValidationError("loss: prediction and ground truth shapes differ");
}

}  // namespace

void LossConfig::validate() const
{
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("loss alpha must lie in [0,1]");
    if (!(smooth > 0.0)) throw ValidationError("Dice smooth must be positive");
    if (!(prob_clamp > 0.0 && prob_clamp < 0.5)) throw ValidationError("prob_clamp must lie in (0, 0.5)");
}

torch::Tensor bce_loss(const torch::Tensor& pr, const torch::Tensor& gt, const LossConfig& cfg)
{
    check_shapes(pr, gt);
    auto p = pr.clamp(cfg.prob_clamp, 1.0 - cfg.prob_clamp);
    return -(gt * torch::log(p) + (1.0 - gt) * torch::log(1.0 - p)).mean();
}

torch::Tensor dice_loss(const torch::Tensor& pr, const torch::Tensor& gt, const LossConfig& cfg)
{
    check_shapes(pr, gt);
    auto inter = (pr * gt).sum();
    return 1.0 - (2.0 * inter + cfg.smooth) / (pr.sum() + gt.sum() + cfg.smooth);
}

torch::Tensor combined_loss(const torch::Tensor& pr, const torch::Tensor& gt, const LossConfig& cfg)
{
    cfg.validate();
    return cfg.alpha * bce_loss(pr, gt, cfg) + (1.0 - cfg.alpha) * dice_loss(pr, gt, cfg);
}

}  // namespace deffa
