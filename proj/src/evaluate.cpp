#include "deffa/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include <fmt/format.h>

#include "deffa/errors.hpp"
#include "deffa/log.hpp"
#include "rng.hpp"

namespace deffa {

namespace {

std::string fmt_opt(const std::optional<double>& v)
{
    return v ? fmt::format("{:.6f}", *v) : std::string{};
}

std::string metrics_columns(const MetricsReport& r)
{
    return fmt::format("{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{:.6f},{},{},{},{}", r.acc, r.recall,
                       r.specificity, r.precision, r.iou, r.dsc, fmt_opt(r.auc), r.mcc, r.counts.tp,
                       r.counts.tn, r.counts.fp, r.counts.fn);
}

}  // namespace

Predictor model_predictor(DeffaNet net, InvariantConfig icfg)
{
    return [net, icfg](const FundusSample& s) mutable { return predict(net, s, icfg); };
}

DatasetEvaluation evaluate_dataset(const Predictor& predictor, const std::vector<FundusSample>& samples,
                                   const EvalOptions& options)
{
    DatasetEvaluation out;
    if (!samples.empty()) out.dataset = samples.front().source_dataset;

    ConfusionCounts total;
    std::vector<double> scores;
    std::vector<uint8_t> labels;
    std::vector<double> image_aucs;
    for (const auto& s : samples) {
        SampleResult result;
        result.id = s.id;
        try {
            s.validate();
            const GrayField prob = predictor(s);
            const auto counts = confusion(prob, s.vessel_mask, s.fov_mask, options.threshold);
            MetricsReport r = segmentation_metrics(counts);
            r.threshold = options.threshold;
            r.sample_ids = {s.id};
            std::vector<double> sc;
            std::vector<uint8_t> lb;
            collect_fov_pixels(prob, s.vessel_mask, s.fov_mask, sc, lb);
            try {
                r.auc = auc_from_scores(sc, lb);
                image_aucs.push_back(*r.auc);
            } catch (const DegenerateError&) {
                r.degenerate.emplace_back("auc");
            }
            total += counts;
            scores.insert(scores.end(), sc.begin(), sc.end());
            labels.insert(labels.end(), lb.begin(), lb.end());
            result.report = std::move(r);
        } catch (const std::exception& e) {
            result.error = e.what();
            out.partial_failure = true;
            logger()->error("evaluation of '{}' failed: {}", s.id, e.what());
        }
        out.samples.push_back(std::move(result));
    }

    out.aggregate = segmentation_metrics(total);
    out.aggregate.threshold = options.threshold;
    for (const auto& r : out.samples)
        if (r.report) out.aggregate.sample_ids.push_back(r.id);
    if (options.per_image_auc) {
        if (!image_aucs.empty()) {
            double sum = 0.0;
            for (double a : image_aucs) sum += a;
            out.aggregate.auc = sum / static_cast<double>(image_aucs.size());
        }
    } else if (!scores.empty()) {
        try {
            out.aggregate.auc = auc_from_scores(scores, labels);
        } catch (const DegenerateError&) {
        }
    }
    if (!out.aggregate.auc) out.aggregate.degenerate.emplace_back("auc");
    return out;
}

DatasetEvaluation evaluate_dataset(DeffaNet& net, const std::vector<FundusSample>& samples,
                                   const InvariantConfig& icfg, const EvalOptions& options)
{
    return evaluate_dataset(model_predictor(net, icfg), samples, options);
}

void to_json(nlohmann::json& j, const SampleResult& result)
{
    j = nlohmann::json{{"id", result.id}};
    if (result.report) j["metrics"] = *result.report;
    else j["error"] = result.error;
}

void to_json(nlohmann::json& j, const DatasetEvaluation& eval)
{
    j = nlohmann::json{{"dataset", eval.dataset},
                       {"aggregate", eval.aggregate},
                       {"samples", eval.samples},
                       {"partial_failure", eval.partial_failure}};
}

std::string evaluation_csv(const DatasetEvaluation& eval)
{
    std::ostringstream os;
    os << "id,acc,recall,specificity,precision,iou,dsc,auc,mcc,tp,tn,fp,fn\n";
    for (const auto& s : eval.samples)
        if (s.report) os << s.id << ',' << metrics_columns(*s.report) << '\n';
    os << "aggregate," << metrics_columns(eval.aggregate) << '\n';
    return os.str();
}

std::vector<CrossDomainRow> cross_domain_eval(const Predictor& predictor, const std::string& source_name,
                                              const std::vector<NamedDataset>& targets,
                                              const EvalOptions& options)
{
    std::vector<CrossDomainRow> rows;
    rows.reserve(targets.size());
    for (const auto& t : targets) {
        CrossDomainRow row{source_name, t.name, evaluate_dataset(predictor, t.samples, options)};
        row.evaluation.dataset = t.name;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string cross_domain_csv(const std::vector<CrossDomainRow>& rows)
{
    std::ostringstream os;
    os << "trained_on,tested_on,dsc,auc,mcc\n";
    for (const auto& r : rows) {
        const auto& m = r.evaluation.aggregate;
        os << fmt::format("{},{},{:.6f},{},{:.6f}\n", r.trained_on, r.tested_on, m.dsc, fmt_opt(m.auc), m.mcc);
    }
    return os.str();
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& ablation_variants()
{
    static const std::vector<std::string> names{"baseline", "+resincept", "+fff", "+frf", "no_csa", "no_jesb"};
    return names;
}

void to_json(nlohmann::json& j, const AblationRow& row)
{
    j = nlohmann::json{{"variant", row.variant},     {"precision", row.precision}, {"dsc", row.dsc},
                       {"mcc", row.mcc},             {"train_samples", row.train_samples},
                       {"wall_time", row.wall_time}};
    j["auc"] = row.auc ? nlohmann::json(*row.auc) : nlohmann::json(nullptr);
}

std::vector<AblationRow> ablation_run(const std::vector<FundusSample>& train_set,
                                      const std::vector<FundusSample>& test_set,
                                      const std::vector<std::string>& variants,
                                      const AblationSettings& settings)
{
    const auto& known = ablation_variants();
    for (const auto& v : variants) {
        if (std::find(known.begin(), known.end(), v) == known.end())
            throw ValidationError("unknown ablation variant '" + v +
                                  "' (expected baseline, +resincept, +fff, +frf, no_csa or no_jesb)");
    }
    if (train_set.empty()) throw ValidationError("ablation training set is empty");
    if (settings.augment_copies < 0) throw ValidationError("augment_copies must be non-negative");

    std::vector<ColorImage> images;
    for (const auto& s : train_set) images.push_back(s.image);
    const ChannelStats reference = settings.reference ? *settings.reference : reference_stats(images, "train");
    const uint64_t seed = settings.train.seed;

    std::vector<AblationRow> rows;
    for (const auto& variant : variants) {
        const auto start = std::chrono::steady_clock::now();
        ModelConfig mcfg = settings.model;
        mcfg.arch = ArchitectureFlags{};
        bool use_jesb = true;
        bool use_csa = true;
        if (variant == "baseline") mcfg.arch = {false, false, false};
        else if (variant == "+resincept") mcfg.arch = {true, false, false};
        else if (variant == "+fff") mcfg.arch = {true, true, false};
        else if (variant == "no_csa") use_csa = false;
        else if (variant == "no_jesb") use_jesb = false;

        std::vector<FundusSample> data = train_set;
        if (use_jesb) {
            const int k_max = settings.k_max > 0 ? settings.k_max : default_k_max(data.size());
            if (k_max >= 2) data = balance_dataset(data, k_max, derive_seed(seed, 10)).samples;
        }
        if (use_csa) {
            AugmentConfig acfg;
            acfg.seed = derive_seed(seed, 20);
            data = augment_dataset(data, reference, acfg, settings.augment_copies);
        }

        DeffaNet net = make_model(mcfg, seed);
        train(net, data, settings.train, settings.loss, settings.invariant);
        const auto eval = evaluate_dataset(net, test_set, settings.invariant, settings.eval);

        AblationRow row;
        row.variant = variant;
        row.precision = eval.aggregate.precision;
        row.dsc = eval.aggregate.dsc;
        row.auc = eval.aggregate.auc;
        row.mcc = eval.aggregate.mcc;
        row.train_samples = data.size();
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        logger()->info("ablation {}: dsc {:.4f} ({} training samples, {:.1f}s)", variant, row.dsc,
                       row.train_samples, row.wall_time);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows)
{
    std::ostringstream os;
    os << "variant,precision,dsc,auc,mcc\n";
    for (const auto& r : rows)
        os << fmt::format("{},{:.6f},{:.6f},{},{:.6f}\n", r.variant, r.precision, r.dsc, fmt_opt(r.auc), r.mcc);
    return os.str();
}

}  // namespace deffa
