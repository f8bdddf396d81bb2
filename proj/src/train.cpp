#include "deffa/train.hpp"

#include <chrono>
#include <numeric>
#include <random>

#include "deffa/errors.hpp"
#include "deffa/log.hpp"
#include "rng.hpp"

namespace deffa {

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (weight_decay < 0.0) throw ValidationError("weight_decay must be non-negative");
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    if (batch_size <= 0) throw ValidationError("batch_size must be positive");
    if (image_size.height <= 0 || image_size.width <= 0 || image_size.height % 8 != 0 ||
        image_size.width % 8 != 0) {
        throw ValidationError("image_size " + std::to_string(image_size.height) + "x" +
                              std::to_string(image_size.width) +
                              " must be positive and divisible by 8 (three 2x downsamplings)");
    }
    if (checkpoint_every < 0 || max_steps < 0) throw ValidationError("counts must be non-negative");
    if (augment_prob < 0.0 || augment_prob > 1.0) throw ValidationError("augment_prob must lie in [0,1]");
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw ValidationError("val_fraction must lie in [0,1)");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg)
{
    j = nlohmann::json{{"learning_rate", cfg.learning_rate},
                       {"weight_decay", cfg.weight_decay},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"seed", cfg.seed},
                       {"image_size", {cfg.image_size.height, cfg.image_size.width}},
                       {"checkpoint_every", cfg.checkpoint_every},
                       {"max_steps", cfg.max_steps},
                       {"augment_prob", cfg.augment_prob},
                       {"val_fraction", cfg.val_fraction}};
}

void to_json(nlohmann::json& j, const EpochRecord& record)
{
    j = nlohmann::json{{"epoch", record.epoch},
                       {"loss", record.loss},
                       {"dice_loss", record.dice},
                       {"lr", record.learning_rate},
                       {"wall_time", record.wall_time},
                       {"steps", record.steps}};
    j["val_loss"] = record.val_loss ? nlohmann::json(*record.val_loss) : nlohmann::json(nullptr);
}

Batch make_batch(std::span<const FundusSample> samples, const InvariantConfig& icfg)
{
    if (samples.empty()) throw ValidationError("make_batch needs at least one sample");
    const auto size = samples.front().size();
    const int64_t b = static_cast<int64_t>(samples.size());
    Batch batch;
    batch.raw = torch::empty({b, 3, size.height, size.width});
    batch.invariant = torch::empty({b, 1, size.height, size.width});
    batch.target = torch::empty({b, 1, size.height, size.width});
    auto raw = batch.raw.accessor<float, 4>();
    auto inv = batch.invariant.accessor<float, 4>();
    auto tgt = batch.target.accessor<float, 4>();
    for (int64_t i = 0; i < b; ++i) {
        const auto& s = samples[static_cast<size_t>(i)];
        s.validate();
        if (!(s.size() == size)) throw ValidationError("all samples in a batch must share dimensions");
        const auto field = make_invariant_input(s, icfg);
        for (int y = 0; y < size.height; ++y) {
            for (int x = 0; x < size.width; ++x) {
                for (int c = 0; c < 3; ++c) raw[i][c][y][x] = static_cast<float>(s.image.at(y, x, c));
                inv[i][0][y][x] = static_cast<float>(field.at(y, x));
                tgt[i][0][y][x] = static_cast<float>(s.vessel_mask.at(y, x));
            }
        }
    }
    return batch;
}

DeffaNet make_model(const ModelConfig& cfg, uint64_t seed)
{
    torch::manual_seed(seed);
    return DeffaNet(cfg);
}

TrainResult train(DeffaNet& net, const std::vector<FundusSample>& dataset, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const InvariantConfig& icfg, const TrainOptions& options)
{
    tcfg.validate();
    lcfg.validate();
    icfg.validate();
    if (dataset.empty()) throw ValidationError("training dataset is empty");
    for (const auto& s : dataset) {
        s.validate();
        if (!(s.size() == tcfg.image_size)) {
            throw ValidationError("sample '" + s.id + "' is " + std::to_string(s.size().height) + "x" +
                                  std::to_string(s.size().width) + " but training expects " +
                                  std::to_string(tcfg.image_size.height) + "x" +
                                  std::to_string(tcfg.image_size.width));
        }
    }
    if (tcfg.augment_prob > 0.0 && options.stats == nullptr)
        throw ValidationError("online augmentation requires reference channel stats");

    torch::manual_seed(derive_seed(tcfg.seed, 0));
    std::mt19937_64 order_rng(derive_seed(tcfg.seed, 1));
    std::mt19937_64 augment_rng(derive_seed(tcfg.seed, 2));

    std::vector<size_t> indices(dataset.size());
    std::iota(indices.begin(), indices.end(), size_t{0});
    std::vector<size_t> val_indices;
    if (tcfg.val_fraction > 0.0 && dataset.size() >= 2) {
        std::shuffle(indices.begin(), indices.end(), order_rng);
        const auto held = std::max<size_t>(1, static_cast<size_t>(tcfg.val_fraction * static_cast<double>(dataset.size())));
        val_indices.assign(indices.end() - static_cast<std::ptrdiff_t>(std::min(held, dataset.size() - 1)), indices.end());
        indices.resize(dataset.size() - val_indices.size());
        std::sort(indices.begin(), indices.end());
    }

    // Invariant inputs of unaugmented samples never change; build them once.
    std::vector<Batch> cached;
    cached.reserve(dataset.size());
    for (const auto& s : dataset) cached.push_back(make_batch(std::span(&s, 1), icfg));

    torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(tcfg.learning_rate)
                                                        .weight_decay(tcfg.weight_decay));

    TrainResult result;
    const auto start = std::chrono::steady_clock::now();
    bool step_cap_hit = false;
    for (int epoch = 1; epoch <= tcfg.epochs && !step_cap_hit; ++epoch) {
        net->train();
        std::shuffle(indices.begin(), indices.end(), order_rng);
        EpochRecord record;
        record.epoch = epoch;
        record.learning_rate = tcfg.learning_rate;
        double loss_sum = 0.0;
        double dice_sum = 0.0;

        for (size_t first = 0; first < indices.size(); first += static_cast<size_t>(tcfg.batch_size)) {
            if (tcfg.max_steps > 0 && result.steps >= tcfg.max_steps) {
                step_cap_hit = true;
                break;
            }
            const size_t last = std::min(indices.size(), first + static_cast<size_t>(tcfg.batch_size));
            std::vector<torch::Tensor> raw, inv, tgt;
            for (size_t k = first; k < last; ++k) {
                const size_t idx = indices[k];
                const bool augment = tcfg.augment_prob > 0.0 &&
                                     std::bernoulli_distribution(tcfg.augment_prob)(augment_rng);
                if (augment) {
                    AugmentConfig acfg;
                    acfg.seed = augment_rng();
                    const auto aug = augment_sample(dataset[idx], *options.stats, acfg);
                    auto b = make_batch(std::span(&aug, 1), icfg);
                    raw.push_back(b.raw);
                    inv.push_back(b.invariant);
                    tgt.push_back(b.target);
                } else {
                    raw.push_back(cached[idx].raw);
                    inv.push_back(cached[idx].invariant);
                    tgt.push_back(cached[idx].target);
                }
            }
            optimizer.zero_grad();
            auto pred = net->forward(torch::cat(raw), torch::cat(inv));
            auto target = torch::cat(tgt);
            auto loss = combined_loss(pred, target, lcfg);
            const double value = loss.item<double>();
            if (!std::isfinite(value)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(result.steps + 1));
            }
            loss.backward();
            optimizer.step();
            ++result.steps;
            ++record.steps;
            loss_sum += value;
            {
                torch::NoGradGuard no_grad;
                dice_sum += dice_loss(pred, target, lcfg).item<double>();
            }
        }
        if (record.steps == 0) break;
        record.loss = loss_sum / record.steps;
        record.dice = dice_sum / record.steps;

        if (!val_indices.empty()) {
            torch::NoGradGuard no_grad;
            net->eval();
            double val_sum = 0.0;
            for (size_t idx : val_indices) {
                auto pred = net->forward(cached[idx].raw, cached[idx].invariant);
                val_sum += combined_loss(pred, cached[idx].target, lcfg).item<double>();
            }
            record.val_loss = val_sum / static_cast<double>(val_indices.size());
        }
        record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(record);
        if (options.on_epoch) options.on_epoch(record);

        if (tcfg.checkpoint_every > 0 && options.checkpoint_dir && epoch % tcfg.checkpoint_every == 0) {
            auto path = *options.checkpoint_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".ckpt");
            std::filesystem::create_directories(path.parent_path());
            auto manifest = options.manifest;
            manifest["epoch"] = epoch;
            save_checkpoint(path, net, manifest);
            result.checkpoints.push_back(path);
        }
        if (options.stop_after && options.stop_after(record)) break;
    }
    net->eval();
    return result;
}

GrayField predict(DeffaNet& net, const FundusSample& sample, const InvariantConfig& icfg)
{
    torch::NoGradGuard no_grad;
    net->eval();
    const auto batch = make_batch(std::span(&sample, 1), icfg);
    auto prob = net->forward(batch.raw, batch.invariant).to(torch::kDouble).contiguous();
    const auto* data = prob.data_ptr<double>();
    return GrayField(sample.size().height, sample.size().width,
                     std::vector<double>(data, data + prob.numel()));
}

}  // namespace deffa
