#include "torch_doctest.hpp"

#include <cmath>

#include "deffa/errors.hpp"
#include "deffa/losses.hpp"

using namespace deffa;

namespace {

torch::Tensor t(std::vector<double> v)
{
    return torch::tensor(v, torch::kDouble);
}

double val(const torch::Tensor& x)
{
    return x.item<double>();
}

double grad_rel_error(const std::function<torch::Tensor(const torch::Tensor&)>& loss, torch::Tensor pr)
{
    pr = pr.clone().requires_grad_();
    loss(pr).backward();
    auto analytic = pr.grad().clone();
    torch::NoGradGuard g;
    auto numeric = torch::zeros_like(pr);
    auto flat = pr.view({-1});
    auto nflat = numeric.view({-1});
    const double h = 1e-6;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = val(loss(pr));
        flat[i] = orig - h;
        const double down = val(loss(pr));
        flat[i] = orig;
        nflat[i] = (up - down) / (2 * h);
    }
    return (analytic - numeric).norm().item<double>() /
           std::max(analytic.norm().item<double>(), 1e-12);
}

}  // namespace

TEST_CASE("config validation")
{
    LossConfig cfg;
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.smooth = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK_THROWS_AS(bce_loss(t({0.5, 0.5}), t({1.0})), ValidationError);
    CHECK_THROWS_AS(dice_loss(t({0.5, 0.5}), t({1.0})), ValidationError);
}

TEST_CASE("BCE")
{
    auto gt = t({1, 0, 1, 0});
    CHECK(val(bce_loss(gt, gt)) <= -std::log(1.0 - 1e-7) + 1e-15);
    CHECK(std::abs(val(bce_loss(torch::full({4}, 0.5, torch::kDouble), gt)) - std::log(2.0)) < 1e-9);
    CHECK(std::abs(val(bce_loss(torch::full({4}, 0.5, torch::kDouble), 1 - gt)) - std::log(2.0)) < 1e-9);
    const double four = val(bce_loss(t({0.9, 0.1, 0.8, 0.3}), gt));
    CHECK(four == doctest::Approx(0.19763).epsilon(1e-4));
    CHECK(four == doctest::Approx(-(2 * std::log(0.9) + std::log(0.8) + std::log(0.7)) / 4).epsilon(1e-12));
    CHECK(std::isfinite(val(bce_loss(t({0.0, 1.0}), t({1.0, 0.0})))));
}

TEST_CASE("Dice")
{
    auto zeros = torch::zeros({16}, torch::kDouble);
    CHECK(val(dice_loss(zeros, zeros)) == 0.0);
    auto gt = t({1, 0, 1, 1, 0});
    CHECK(val(dice_loss(gt, gt)) == doctest::Approx(0.0));
    const double n = 16;
    CHECK(val(dice_loss(torch::ones({16}, torch::kDouble), zeros)) == doctest::Approx(1.0 - 1.0 / (n + 1)).epsilon(1e-12));
}

TEST_CASE("combined loss")
{
    auto pr = t({0.9, 0.1, 0.8, 0.3, 0.55});
    auto gt = t({1, 0, 1, 0, 1});
    LossConfig cfg;
    const double bce = val(bce_loss(pr, gt)), dice = val(dice_loss(pr, gt));
    CHECK(std::abs(val(combined_loss(pr, gt, cfg)) - (0.25 * bce + 0.75 * dice)) < 1e-12);
    cfg.alpha = 0.0;
    CHECK(val(combined_loss(pr, gt, cfg)) == doctest::Approx(dice).epsilon(1e-14));
    cfg.alpha = 1.0;
    CHECK(val(combined_loss(pr, gt, cfg)) == doctest::Approx(bce).epsilon(1e-14));
    // the blend itself: 0.25 * 0.4 + 0.75 * 0.2
    CHECK(0.25 * 0.4 + 0.75 * 0.2 == doctest::Approx(0.25));

    cfg.alpha = 0.5;
    const double mid = val(combined_loss(pr, gt, cfg));
    CHECK(std::abs(mid - 0.5 * (bce + dice)) < 1e-12);
}

TEST_CASE("loss gradients match central differences on 4x4 maps")
{
    torch::manual_seed(2);
    auto pr = torch::rand({4, 4}, torch::kDouble) * 0.8 + 0.1;
    auto gt = (torch::rand({4, 4}, torch::kDouble) > 0.5).to(torch::kDouble);
    LossConfig cfg;
    CHECK(grad_rel_error([&](const torch::Tensor& p) { return bce_loss(p, gt, cfg); }, pr) < 1e-3);
    CHECK(grad_rel_error([&](const torch::Tensor& p) { return dice_loss(p, gt, cfg); }, pr) < 1e-3);
    CHECK(grad_rel_error([&](const torch::Tensor& p) { return combined_loss(p, gt, cfg); }, pr) < 1e-3);
}

TEST_CASE("dice stays in [0,1) and losses ignore pixel order")
{
    torch::manual_seed(3);
    for (int i = 0; i < 50; ++i) {
        auto pr = torch::rand({32}, torch::kDouble);
        auto gt = (torch::rand({32}, torch::kDouble) > 0.6).to(torch::kDouble);
        const double d = val(dice_loss(pr, gt));
        REQUIRE(d >= 0.0);
        REQUIRE(d < 1.0);
        auto perm = torch::randperm(32);
        auto ppr = pr.index_select(0, perm), pgt = gt.index_select(0, perm);
        REQUIRE(std::abs(val(bce_loss(pr, gt)) - val(bce_loss(ppr, pgt))) < 1e-12);
        REQUIRE(std::abs(d - val(dice_loss(ppr, pgt))) < 1e-12);
        REQUIRE(std::abs(val(combined_loss(pr, gt)) - val(combined_loss(ppr, pgt))) < 1e-12);
    }
}
