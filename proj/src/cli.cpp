#include "deffa/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "deffa/config.hpp"
#include "deffa/errors.hpp"
#include "deffa/evaluate.hpp"
#include "deffa/jesb.hpp"
#include "deffa/log.hpp"
#include "deffa/manifest.hpp"
#include "deffa/metrics.hpp"

namespace fs = std::filesystem;

namespace deffa {

namespace {

using Override = std::function<void(PipelineConfig&)>;

/// Binds a flag whose value, when given, replaces the config-file value.
template <typename T, typename Apply>
CLI::Option* override_flag(CLI::App* app, std::vector<Override>& overrides, const std::string& name,
                           const std::string& help, Apply apply)
{
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(name, *value, help);
    overrides.push_back([opt, value, apply](PipelineConfig& cfg) {
        if (opt->count() > 0) apply(cfg, *value);
    });
    return opt;
}

/// Options every subcommand shares.
struct Common {
    std::string config;
    std::string out;
    std::vector<Override> overrides;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "INI config file; flags override its values");
    app->add_option("--out", c.out, "output directory (all files are written below it)")->required();
}

fs::path resolve_data(const std::string& path)
{
    fs::path p(path);
    if (p.is_relative() && !fs::exists(p)) {
        if (const char* root = std::getenv(kDataRootEnv); root && *root) {
            fs::path candidate = fs::path(root) / p;
            if (fs::exists(candidate)) return candidate;
        }
    }
    return p;
}

std::vector<FundusSample> load_inputs(const std::vector<std::string>& dirs, RunManifest& manifest)
{
    std::vector<FundusSample> out;
    for (const auto& d : dirs) {
        const fs::path root = resolve_data(d);
        add_input_digests(manifest, root);
        auto samples = load_dataset(root);
        out.insert(out.end(), std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.end()));
    }
    return out;
}

/// Replaces each sample's FOV with the file of the same stem in `dir`.
void apply_fov_dir(std::vector<FundusSample>& samples, const fs::path& dir, RunManifest& manifest)
{
    add_input_digests(manifest, dir);
    std::map<std::string, fs::path> by_stem;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) by_stem[e.path().stem().string()] = e.path();
    for (auto& s : samples) {
        auto it = by_stem.find(s.id);
        if (it == by_stem.end()) throw ValidationError("no FOV mask for '" + s.id + "' in " + dir.string());
        s.fov_mask = read_mask(it->second);
        s.validate();
    }
}

std::vector<FundusSample> resized(const std::vector<FundusSample>& samples, Size2 size)
{
    std::vector<FundusSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(resize_sample(s, size));
    return out;
}

void write_text(const fs::path& path, const std::string& text, RunManifest& manifest)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    manifest.output_paths.push_back(path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j, RunManifest& manifest)
{
    write_text(path, j.dump(2) + "\n", manifest);
}

void record_dataset(const fs::path& root, const std::vector<FundusSample>& samples, RunManifest& manifest)
{
    for (const auto& s : samples) {
        save_sample(s, root);
        for (const char* sub : {"images", "masks", "fov"})
            manifest.output_paths.push_back((root / sub / (s.id + ".png")).string());
    }
}

/// Image size for inference: explicit flag, else the size the model was trained at.
std::optional<Size2> inference_size(const std::string& flag, const Checkpoint& ckpt)
{
    if (!flag.empty()) return parse_size(flag);
    if (ckpt.manifest.contains("image_size")) {
        const auto& s = ckpt.manifest["image_size"];
        return Size2{s.at(0).get<int>(), s.at(1).get<int>()};
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

struct Context {
    PipelineConfig cfg;
    RunManifest manifest;
    fs::path out;
};

Context begin(const std::string& command, const Common& c)
{
    Context ctx;
    if (!c.config.empty()) {
        const fs::path cfg_path = c.config;
        ctx.cfg = load_config(cfg_path);
        add_input_digests(ctx.manifest, cfg_path);
    }
    for (const auto& apply : c.overrides) apply(ctx.cfg);
    ctx.cfg.validate();
    ctx.manifest.command = command;
    ctx.manifest.config_snapshot = ctx.cfg;
    ctx.out = c.out;
    fs::create_directories(ctx.out);
    return ctx;
}

void finish(Context& ctx, std::chrono::steady_clock::time_point start)
{
    ctx.manifest.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(ctx.out / "manifest.json", ctx.manifest);
}

void add_invariant_flags(CLI::App* app, std::vector<Override>& ov)
{
    override_flag<int>(app, ov, "--window", "local-average window (odd)",
                       [](PipelineConfig& c, int v) { c.invariant.window_size = v; });
    override_flag<double>(app, ov, "--alpha-enh", "enhancement scale",
                          [](PipelineConfig& c, double v) { c.invariant.alpha_enh = v; });
}

void add_train_flags(CLI::App* app, std::vector<Override>& ov)
{
    override_flag<double>(app, ov, "--lr", "learning rate",
                          [](PipelineConfig& c, double v) { c.train.learning_rate = v; });
    override_flag<double>(app, ov, "--weight-decay", "L2 weight decay",
                          [](PipelineConfig& c, double v) { c.train.weight_decay = v; });
    override_flag<int>(app, ov, "--epochs", "training epochs", [](PipelineConfig& c, int v) { c.train.epochs = v; });
    override_flag<int>(app, ov, "--batch-size", "batch size",
                       [](PipelineConfig& c, int v) { c.train.batch_size = v; });
    override_flag<uint64_t>(app, ov, "--seed", "training seed",
                            [](PipelineConfig& c, uint64_t v) { c.train.seed = v; });
    override_flag<std::string>(app, ov, "--size", "training image size HxW (divisible by 8)",
                               [](PipelineConfig& c, const std::string& v) { c.train.image_size = parse_size(v); });
    override_flag<int>(app, ov, "--checkpoint-every", "epochs between checkpoints",
                       [](PipelineConfig& c, int v) { c.train.checkpoint_every = v; });
    override_flag<int>(app, ov, "--max-steps", "optimizer step cap (0 = none)",
                       [](PipelineConfig& c, int v) { c.train.max_steps = v; });
    override_flag<double>(app, ov, "--augment-prob", "online augmentation probability",
                          [](PipelineConfig& c, double v) { c.train.augment_prob = v; });
    override_flag<double>(app, ov, "--val-fraction", "held-out validation fraction",
                          [](PipelineConfig& c, double v) { c.train.val_fraction = v; });
    override_flag<double>(app, ov, "--loss-alpha", "BCE weight in the combined loss",
                          [](PipelineConfig& c, double v) { c.loss.alpha = v; });
}

void add_eval_flags(CLI::App* app, std::vector<Override>& ov)
{
    override_flag<double>(app, ov, "--threshold", "binarization threshold",
                          [](PipelineConfig& c, double v) { c.eval.threshold = v; });
    auto flag = std::make_shared<bool>(false);
    auto* opt = app->add_flag("--per-image-auc", *flag, "average per-image AUCs instead of pooling pixels");
    ov.push_back([opt](PipelineConfig& c) {
        if (opt->count() > 0) c.eval.per_image_auc = true;
    });
}

}  // namespace

int dispatch(const std::vector<std::string>& args)
{
    CLI::App app{"Retinal vessel segmentation pipeline", "deffa"};
    app.require_subcommand(1);
    app.fallthrough();  // -v/-q are accepted after the subcommand too
    bool verbose = false;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");

    const auto start = std::chrono::steady_clock::now();
    std::function<int()> action;

    // prep -----------------------------------------------------------------
    Common prep_c;
    std::vector<std::string> prep_data;
    auto* prep = app.add_subcommand("prep", "write the enhanced single-channel input of every image");
    add_common(prep, prep_c);
    prep->add_option("--data", prep_data, "dataset directory (images/, masks/, fov/)")->required();
    add_invariant_flags(prep, prep_c.overrides);
    {
        auto flag = std::make_shared<bool>(false);
        auto* opt = prep->add_flag("--no-normalize", *flag, "skip the min-max rescale");
        prep_c.overrides.push_back([opt](PipelineConfig& c) {
            if (opt->count() > 0) c.invariant.normalize_output = false;
        });
    }
    prep->callback([&] {
        action = [&] {
            auto ctx = begin("prep", prep_c);
            const auto samples = load_inputs(prep_data, ctx.manifest);
            for (const auto& s : samples) {
                const auto path = ctx.out / (s.id + "__invariant.png");
                write_png(path, make_invariant_input(s, ctx.cfg.invariant));
                ctx.manifest.output_paths.push_back(path.string());
            }
            logger()->info("wrote {} enhanced images to {}", samples.size(), ctx.out.string());
            finish(ctx, start);
            return kExitOk;
        };
    });

    // stats ----------------------------------------------------------------
    Common stats_c;
    std::vector<std::string> stats_data;
    std::string stats_name = "reference";
    auto* stats = app.add_subcommand("stats", "compute reference colour statistics");
    add_common(stats, stats_c);
    stats->add_option("--data", stats_data, "reference dataset directories (pooled)")->required();
    stats->add_option("--name", stats_name, "label stored with the statistics");
    stats->callback([&] {
        action = [&] {
            auto ctx = begin("stats", stats_c);
            const auto samples = load_inputs(stats_data, ctx.manifest);
            std::vector<ColorImage> images;
            for (const auto& s : samples) images.push_back(s.image);
            const auto result = reference_stats(images, stats_name);
            const auto path = ctx.out / "reference_stats.json";
            save_stats(path, result);
            ctx.manifest.output_paths.push_back(path.string());
            finish(ctx, start);
            return kExitOk;
        };
    });

    // balance --------------------------------------------------------------
    Common bal_c;
    std::vector<std::string> bal_data;
    std::string bal_report;
    auto* balance = app.add_subcommand("balance", "cluster masks and top up minority clusters");
    add_common(balance, bal_c);
    balance->add_option("--data", bal_data, "dataset directories")->required();
    balance->add_option("--report", bal_report, "cluster report path (default <out>/cluster_report.json)");
    override_flag<int>(balance, bal_c.overrides, "--kmax", "largest k searched (0 = min(10, N-1))",
                       [](PipelineConfig& c, int v) { c.k_max = v; });
    override_flag<uint64_t>(balance, bal_c.overrides, "--seed", "clustering and synthesis seed",
                            [](PipelineConfig& c, uint64_t v) { c.balance_seed = v; });
    balance->callback([&] {
        action = [&] {
            auto ctx = begin("balance", bal_c);
            ctx.manifest.seed = ctx.cfg.balance_seed;
            const auto samples = load_inputs(bal_data, ctx.manifest);
            const int k_max = ctx.cfg.k_max > 0 ? ctx.cfg.k_max : std::max(2, default_k_max(samples.size()));
            const auto result = balance_dataset(samples, k_max, ctx.cfg.balance_seed);
            record_dataset(ctx.out, result.samples, ctx.manifest);
            const fs::path report = bal_report.empty() ? ctx.out / "cluster_report.json" : fs::path(bal_report);
            write_json(report, result.model, ctx.manifest);
            logger()->info("k* = {}, {} synthetic samples", result.model.k_star, result.synthetic_count);
            finish(ctx, start);
            return kExitOk;
        };
    });

    // augment --------------------------------------------------------------
    Common aug_c;
    std::vector<std::string> aug_data;
    std::string aug_stats;
    auto* augment = app.add_subcommand("augment", "colour-statistics augmentation with rotation");
    add_common(augment, aug_c);
    augment->add_option("--data", aug_data, "dataset directories")->required();
    augment->add_option("--ref-stats", aug_stats, "reference statistics from `stats`")->required();
    override_flag<double>(augment, aug_c.overrides, "--alpha-min", "smallest blend factor",
                          [](PipelineConfig& c, double v) { c.augment.alpha_range.lo = v; });
    override_flag<double>(augment, aug_c.overrides, "--alpha-max", "largest blend factor",
                          [](PipelineConfig& c, double v) { c.augment.alpha_range.hi = v; });
    override_flag<double>(augment, aug_c.overrides, "--rot", "rotation range +/- degrees",
                          [](PipelineConfig& c, double v) { c.augment.rotation_degrees = {-v, v}; });
    override_flag<uint64_t>(augment, aug_c.overrides, "--seed", "augmentation seed",
                            [](PipelineConfig& c, uint64_t v) { c.augment.seed = v; });
    override_flag<int>(augment, aug_c.overrides, "--count", "synthetics per source image",
                       [](PipelineConfig& c, int v) { c.augment_count = v; });
    augment->callback([&] {
        action = [&] {
            auto ctx = begin("augment", aug_c);
            ctx.manifest.seed = ctx.cfg.augment.seed;
            const auto samples = load_inputs(aug_data, ctx.manifest);
            add_input_digests(ctx.manifest, aug_stats);
            const auto ref = load_stats(aug_stats);
            const auto result = augment_dataset(samples, ref, ctx.cfg.augment, ctx.cfg.augment_count);
            record_dataset(ctx.out, result, ctx.manifest);
            finish(ctx, start);
            return kExitOk;
        };
    });

    // train ----------------------------------------------------------------
    Common train_c;
    std::vector<std::string> train_data;
    std::string train_resume, train_stats;
    auto* trainer = app.add_subcommand("train", "train a model");
    add_common(trainer, train_c);
    trainer->add_option("--data", train_data, "training dataset directories")->required();
    trainer->add_option("--resume", train_resume, "checkpoint to continue from (optimizer state restarts)");
    trainer->add_option("--ref-stats", train_stats, "reference statistics for online augmentation");
    add_train_flags(trainer, train_c.overrides);
    add_invariant_flags(trainer, train_c.overrides);
    trainer->callback([&] {
        action = [&] {
            auto ctx = begin("train", train_c);
            const auto& cfg = ctx.cfg;
            ctx.manifest.seed = cfg.train.seed;
            const auto samples = resized(load_inputs(train_data, ctx.manifest), cfg.train.image_size);
            std::optional<ChannelStats> ref;
            if (!train_stats.empty()) {
                add_input_digests(ctx.manifest, train_stats);
                ref = load_stats(train_stats);
            }

            DeffaNet net{nullptr};
            if (!train_resume.empty()) {
                add_input_digests(ctx.manifest, train_resume);
                net = load_checkpoint(train_resume, cfg.model).net;
            } else {
                net = make_model(cfg.model, cfg.train.seed);
            }
            std::string trained_on;
            for (const auto& s : samples) {
                if (trained_on == s.source_dataset || trained_on.ends_with("+" + s.source_dataset)) continue;
                trained_on += (trained_on.empty() ? "" : "+") + s.source_dataset;
            }
            TrainOptions options;
            options.stats = ref ? &*ref : nullptr;
            options.checkpoint_dir = ctx.out / "checkpoints";
            options.manifest = {{"trained_on", trained_on},
                                {"image_size", {cfg.train.image_size.height, cfg.train.image_size.width}},
                                {"config", cfg}};
            options.on_epoch = [](const EpochRecord& r) {
                logger()->info("epoch {} loss {:.5f} ({:.1f}s)", r.epoch, r.loss, r.wall_time);
            };
            const auto result = train(net, samples, cfg.train, cfg.loss, cfg.invariant, options);
            for (const auto& p : result.checkpoints) ctx.manifest.output_paths.push_back(p.string());

            auto model_manifest = options.manifest;
            model_manifest["epochs_completed"] = result.history.size();
            model_manifest["steps"] = result.steps;
            const auto model_path = ctx.out / "model.ckpt";
            save_checkpoint(model_path, net, model_manifest);
            ctx.manifest.output_paths.push_back(model_path.string());
            write_json(ctx.out / "history.json", result.history, ctx.manifest);
            finish(ctx, start);
            return kExitOk;
        };
    });

    // eval -----------------------------------------------------------------
    Common eval_c;
    std::string eval_model, eval_fov, eval_size;
    std::vector<std::string> eval_data;
    auto* evaluator = app.add_subcommand("eval", "evaluate a model on a dataset");
    add_common(evaluator, eval_c);
    evaluator->add_option("--model", eval_model, "checkpoint")->required();
    evaluator->add_option("--data", eval_data, "dataset directories")->required();
    evaluator->add_option("--fov", eval_fov, "directory of FOV masks overriding <data>/fov");
    evaluator->add_option("--size", eval_size, "inference size HxW (default: training size)");
    add_eval_flags(evaluator, eval_c.overrides);
    add_invariant_flags(evaluator, eval_c.overrides);
    evaluator->callback([&] {
        action = [&] {
            auto ctx = begin("eval", eval_c);
            add_input_digests(ctx.manifest, eval_model);
            auto ckpt = load_checkpoint(eval_model);
            auto samples = load_inputs(eval_data, ctx.manifest);
            if (!eval_fov.empty()) apply_fov_dir(samples, resolve_data(eval_fov), ctx.manifest);
            if (auto size = inference_size(eval_size, ckpt)) samples = resized(samples, *size);

            auto base = model_predictor(ckpt.net, ctx.cfg.invariant);
            const fs::path out = ctx.out;
            auto* manifest = &ctx.manifest;
            Predictor predictor = [&base, out, manifest](const FundusSample& s) {
                auto prob = base(s);
                const auto path = out / (s.id + "__prob.png");
                write_png(path, prob);
                manifest->output_paths.push_back(path.string());
                return prob;
            };
            const auto eval = evaluate_dataset(predictor, samples, ctx.cfg.eval);
            write_json(ctx.out / "report.json", eval, ctx.manifest);
            write_text(ctx.out / "report.csv", evaluation_csv(eval), ctx.manifest);
            logger()->info("dsc {:.4f} acc {:.4f} mcc {:.4f}", eval.aggregate.dsc, eval.aggregate.acc,
                           eval.aggregate.mcc);
            finish(ctx, start);
            return eval.partial_failure ? kExitPartial : kExitOk;
        };
    });

    // crossval -------------------------------------------------------------
    Common cross_c;
    std::string cross_model, cross_source, cross_size;
    std::vector<std::string> cross_targets;
    auto* crossval = app.add_subcommand("crossval", "evaluate a trained model on other datasets");
    add_common(crossval, cross_c);
    crossval->add_option("--model", cross_model, "checkpoint")->required();
    crossval->add_option("--target", cross_targets, "target dataset directories (each used in full)");
    crossval->add_option("--source-name", cross_source, "training dataset label (default: from checkpoint)");
    crossval->add_option("--size", cross_size, "inference size HxW (default: training size)");
    add_eval_flags(crossval, cross_c.overrides);
    crossval->callback([&] {
        action = [&] {
            auto ctx = begin("crossval", cross_c);
            add_input_digests(ctx.manifest, cross_model);
            auto ckpt = load_checkpoint(cross_model);
            std::string source = cross_source;
            if (source.empty()) source = ckpt.manifest.value("trained_on", std::string("unknown"));
            const auto size = inference_size(cross_size, ckpt);
            std::vector<NamedDataset> targets;
            for (const auto& t : cross_targets) {
                auto samples = load_inputs({t}, ctx.manifest);
                if (size) samples = resized(samples, *size);
                const std::string name = samples.empty() ? t : samples.front().source_dataset;
                targets.push_back({name, std::move(samples)});
            }
            const auto rows = cross_domain_eval(model_predictor(ckpt.net, ctx.cfg.invariant), source, targets,
                                                ctx.cfg.eval);
            nlohmann::json j = nlohmann::json::array();
            bool partial = false;
            for (const auto& r : rows) {
                j.push_back({{"trained_on", r.trained_on}, {"tested_on", r.tested_on}, {"evaluation", r.evaluation}});
                partial = partial || r.evaluation.partial_failure;
            }
            write_json(ctx.out / "crossval.json", j, ctx.manifest);
            write_text(ctx.out / "crossval.csv", cross_domain_csv(rows), ctx.manifest);
            finish(ctx, start);
            return partial ? kExitPartial : kExitOk;
        };
    });

    // ablate ---------------------------------------------------------------
    Common abl_c;
    std::vector<std::string> abl_train, abl_test, abl_variants = ablation_variants();
    std::string abl_stats;
    auto* ablate = app.add_subcommand("ablate", "train and score each ablation variant");
    add_common(ablate, abl_c);
    ablate->add_option("--train-data", abl_train, "training dataset directories")->required();
    ablate->add_option("--test-data", abl_test, "test dataset directories")->required();
    ablate->add_option("--variants", abl_variants, "variants to run (default: all six)")->delimiter(',');
    ablate->add_option("--ref-stats", abl_stats, "reference statistics (default: training set)");
    override_flag<int>(ablate, abl_c.overrides, "--kmax", "largest k searched",
                       [](PipelineConfig& c, int v) { c.k_max = v; });
    add_train_flags(ablate, abl_c.overrides);
    add_eval_flags(ablate, abl_c.overrides);
    ablate->callback([&] {
        action = [&] {
            auto ctx = begin("ablate", abl_c);
            const auto& cfg = ctx.cfg;
            ctx.manifest.seed = cfg.train.seed;
            const auto train_set = resized(load_inputs(abl_train, ctx.manifest), cfg.train.image_size);
            const auto test_set = resized(load_inputs(abl_test, ctx.manifest), cfg.train.image_size);
            AblationSettings settings;
            settings.model = cfg.model;
            settings.train = cfg.train;
            settings.loss = cfg.loss;
            settings.invariant = cfg.invariant;
            settings.k_max = cfg.k_max;
            settings.augment_copies = cfg.augment_count;
            settings.eval = cfg.eval;
            if (!abl_stats.empty()) {
                add_input_digests(ctx.manifest, abl_stats);
                settings.reference = load_stats(abl_stats);
            }
            const auto rows = ablation_run(train_set, test_set, abl_variants, settings);
            write_json(ctx.out / "ablation.json", rows, ctx.manifest);
            write_text(ctx.out / "ablation.csv", ablation_csv(rows), ctx.manifest);
            finish(ctx, start);
            return kExitOk;
        };
    });

    // overlay --------------------------------------------------------------
    Common ov_c;
    std::string ov_model, ov_fov, ov_size;
    std::vector<std::string> ov_data;
    auto* overlays = app.add_subcommand("overlay", "render TP/FP/FN composites");
    add_common(overlays, ov_c);
    overlays->add_option("--model", ov_model, "checkpoint")->required();
    overlays->add_option("--data", ov_data, "dataset directories")->required();
    overlays->add_option("--fov", ov_fov, "directory of FOV masks overriding <data>/fov");
    overlays->add_option("--size", ov_size, "inference size HxW (default: training size)");
    add_eval_flags(overlays, ov_c.overrides);
    overlays->callback([&] {
        action = [&] {
            auto ctx = begin("overlay", ov_c);
            add_input_digests(ctx.manifest, ov_model);
            auto ckpt = load_checkpoint(ov_model);
            auto samples = load_inputs(ov_data, ctx.manifest);
            if (!ov_fov.empty()) apply_fov_dir(samples, resolve_data(ov_fov), ctx.manifest);
            if (auto size = inference_size(ov_size, ckpt)) samples = resized(samples, *size);
            for (const auto& s : samples) {
                const auto prob = predict(ckpt.net, s, ctx.cfg.invariant);
                const auto path = ctx.out / (s.id + "__overlay.png");
                write_png(path, overlay(prob, s.vessel_mask, s.fov_mask, ctx.cfg.eval.threshold));
                ctx.manifest.output_paths.push_back(path.string());
            }
            finish(ctx, start);
            return kExitOk;
        };
    });

    for (const auto& a : args) {
        if (a.empty() || a[0] == '-') continue;
        bool known = false;
        for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == a;
        if (!known) {
            std::cerr << "error: unknown subcommand '" << a << "'\n\n" << app.help();
            return kExitUsage;
        }
        break;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    if (quiet) logger()->set_level(spdlog::level::warn);
    else if (verbose) logger()->set_level(spdlog::level::debug);
    else logger()->set_level(spdlog::level::info);

    try {
        return action ? action() : kExitUsage;
    } catch (const std::exception& e) {
        logger()->error("{}", e.what());
        return kExitUsage;
    }
}

}  // namespace deffa
