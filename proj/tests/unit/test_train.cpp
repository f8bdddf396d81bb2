#include "torch_doctest.hpp"

#include <filesystem>

#include "deffa/errors.hpp"
#include "deffa/metrics.hpp"
#include "deffa/train.hpp"
#include "synthetic.hpp"

using namespace deffa;

namespace {

ModelConfig small_model()
{
    ModelConfig cfg;
    cfg.encoder_channels = {4, 8, 8};
    cfg.bottleneck_channels = 16;
    cfg.decoder_channels = {8, 8, 4};
    cfg.dropblock_size = 3;
    return cfg;
}

TrainConfig quick(int epochs, Size2 size = {32, 32})
{
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.image_size = size;
    cfg.seed = 5;
    return cfg;
}

bool same_parameters(DeffaNet& a, DeffaNet& b)
{
    auto pa = a->parameters();
    auto pb = b->parameters();
    for (size_t i = 0; i < pa.size(); ++i)
        if (!torch::equal(pa[i], pb[i])) return false;
    return true;
}

}  // namespace

TEST_CASE("config validation")
{
    auto cfg = quick(1, {130, 130});
    try {
        cfg.validate();
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("divisible by 8") != std::string::npos);
    }
    cfg = quick(1);
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("make_batch stacks raw, invariant and target channels")
{
    auto data = testing::synthetic_dataset(2, 16, 1);
    auto b = make_batch(data, {});
    CHECK((b.raw.sizes() == torch::IntArrayRef{2, 3, 16, 16}));
    CHECK((b.invariant.sizes() == torch::IntArrayRef{2, 1, 16, 16}));
    CHECK(b.target.sum().item<double>() == static_cast<double>(data[0].vessel_mask.ones() + data[1].vessel_mask.ones()));
    CHECK(b.raw[1][2][5][7].item<float>() == static_cast<float>(data[1].image.at(5, 7, 2)));
}

TEST_CASE("zero epochs leave the parameters untouched")
{
    auto data = testing::synthetic_dataset(1, 32, 2);
    DeffaNet net = make_model(small_model(), 1);
    DeffaNet ref = make_model(small_model(), 1);
    auto result = train(net, data, quick(0), {}, {});
    CHECK(result.history.empty());
    CHECK(result.steps == 0);
    CHECK(same_parameters(net, ref));
}

TEST_CASE("input errors")
{
    DeffaNet net = make_model(small_model(), 1);
    CHECK_THROWS_AS(train(net, {}, quick(1), {}, {}), ValidationError);
    auto wrong = testing::synthetic_dataset(1, 16, 2);
    CHECK_THROWS_AS(train(net, wrong, quick(1), {}, {}), ValidationError);
    auto data = testing::synthetic_dataset(1, 32, 2);
    auto cfg = quick(1);
    cfg.augment_prob = 0.5;
    CHECK_THROWS_AS(train(net, data, cfg, {}, {}), ValidationError);
}

TEST_CASE("a non-finite loss aborts and names the step")
{
    auto data = testing::synthetic_dataset(2, 32, 3);
    DeffaNet net = make_model(small_model(), 1);
    {
        torch::NoGradGuard g;
        net->parameters().back().fill_(std::nan(""));
    }
    try {
        train(net, data, quick(1), {}, {});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("identical seeds give identical parameters")
{
    auto data = testing::synthetic_dataset(3, 32, 4);
    auto cfg = quick(2);
    cfg.batch_size = 2;
    DeffaNet a = make_model(small_model(), 7);
    DeffaNet b = make_model(small_model(), 7);
    auto ra = train(a, data, cfg, {}, {});
    auto rb = train(b, data, cfg, {}, {});
    CHECK(ra.steps == 4);
    CHECK(same_parameters(a, b));
    REQUIRE(ra.history.size() == 2);
    CHECK(ra.history[1].loss == rb.history[1].loss);

    cfg.seed = 6;
    DeffaNet c = make_model(small_model(), 7);
    train(c, data, cfg, {}, {});
    CHECK_FALSE(same_parameters(a, c));
}

TEST_CASE("step cap, validation split, online augmentation and checkpoints")
{
    auto data = testing::synthetic_dataset(4, 32, 5);
    std::vector<ColorImage> imgs{data[0].image};
    auto stats = reference_stats(imgs);
    auto dir = std::filesystem::temp_directory_path() / "deffa_train_ckpt";
    std::filesystem::remove_all(dir);

    auto cfg = quick(3);
    cfg.batch_size = 1;
    cfg.max_steps = 7;
    cfg.val_fraction = 0.25;
    cfg.augment_prob = 1.0;
    cfg.checkpoint_every = 2;
    TrainOptions options;
    options.stats = &stats;
    options.checkpoint_dir = dir;
    options.manifest = {{"run", "unit"}};
    int callbacks = 0;
    options.on_epoch = [&](const EpochRecord&) { ++callbacks; };

    DeffaNet net = make_model(small_model(), 2);
    auto result = train(net, data, cfg, {}, {}, options);
    CHECK(result.steps == 7);
    REQUIRE(result.history.size() == 3);
    CHECK(callbacks == 3);
    CHECK(result.history[0].steps == 3);
    CHECK(result.history[2].steps == 1);
    for (const auto& r : result.history) {
        CHECK(r.val_loss.has_value());
        CHECK(r.learning_rate == cfg.learning_rate);
        CHECK(r.wall_time >= 0.0);
    }
    REQUIRE(result.checkpoints.size() == 1);
    auto ckpt = load_checkpoint(result.checkpoints[0], small_model());
    CHECK(ckpt.manifest["epoch"] == 2);
    CHECK(ckpt.manifest["run"] == "unit");
    nlohmann::json j = result.history;
    CHECK(j[0].contains("loss"));
    CHECK(j[0].contains("wall_time"));
}

TEST_CASE("predict returns a probability map of the sample's size")
{
    auto s = testing::synthetic_fundus(32, 9);
    DeffaNet net = make_model(small_model(), 3);
    auto p = predict(net, s, {});
    CHECK(p.size() == s.size());
    for (double v : p.pixels()) REQUIRE((v > 0.0 && v < 1.0));
}

TEST_CASE("soft Dice loss decreases over the first ten epochs on two 128x128 images")
{
    torch::set_num_threads(1);
    int decreasing = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto data = testing::synthetic_dataset(2, 128, 200 + seed);
        DeffaNet net = make_model({}, seed);
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = seed;
        auto r = train(net, data, cfg, {}, {});
        REQUIRE(r.history.size() == 10);
        CHECK(r.steps <= 300);
        bool strictly = true;
        for (size_t e = 1; e < r.history.size(); ++e) strictly = strictly && r.history[e].dice < r.history[e - 1].dice;
        MESSAGE("seed " << seed << ": dice loss " << r.history.front().dice << " -> " << r.history.back().dice
                        << std::string(strictly ? " (strictly decreasing)" : ""));
        decreasing += strictly ? 1 : 0;
    }
    CHECK(decreasing >= 8);
}
