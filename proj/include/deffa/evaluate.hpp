#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "deffa/csa.hpp"
#include "deffa/imaging.hpp"
#include "deffa/invariant.hpp"
#include "deffa/jesb.hpp"
#include "deffa/losses.hpp"
#include "deffa/metrics.hpp"
#include "deffa/net.hpp"
#include "deffa/train.hpp"

namespace deffa {

/// Maps a sample to a probability map of the same size.
using Predictor = std::function<GrayField(const FundusSample&)>;

Predictor model_predictor(DeffaNet net, InvariantConfig icfg = {});

struct EvalOptions {
    double threshold = 0.5;
    bool per_image_auc = false;  ///< mean of per-image AUCs instead of pooled pixels
};

struct SampleResult {
    std::string id;
    std::optional<MetricsReport> report;  ///< empty when the sample failed
    std::string error;
};

struct DatasetEvaluation {
    std::string dataset;
    MetricsReport aggregate;       ///< over summed counts of successful samples
    std::vector<SampleResult> samples;
    bool partial_failure = false;
};

void to_json(nlohmann::json& j, const SampleResult& result);
void to_json(nlohmann::json& j, const DatasetEvaluation& eval);

/// Per-sample inference; failures are recorded and the sample is skipped.
DatasetEvaluation evaluate_dataset(const Predictor& predictor, const std::vector<FundusSample>& samples,
                                   const EvalOptions& options = {});

DatasetEvaluation evaluate_dataset(DeffaNet& net, const std::vector<FundusSample>& samples,
                                   const InvariantConfig& icfg, const EvalOptions& options = {});

/// Per-sample rows followed by an aggregate row.
std::string evaluation_csv(const DatasetEvaluation& eval);

struct NamedDataset {
    std::string name;
    std::vector<FundusSample> samples;
};

struct CrossDomainRow {
    std::string trained_on;
    std::string tested_on;
    DatasetEvaluation evaluation;
};

std::vector<CrossDomainRow> cross_domain_eval(const Predictor& predictor, const std::string& source_name,
                                              const std::vector<NamedDataset>& targets,
                                              const EvalOptions& options = {});

/// Columns: trained_on,tested_on,dsc,auc,mcc
std::string cross_domain_csv(const std::vector<CrossDomainRow>& rows);

// ---------------------------------------------------------------------------

/// Ablation rows in table order.
const std::vector<std::string>& ablation_variants();

struct AblationSettings {
    ModelConfig model;          ///< architecture flags are overridden per variant
    TrainConfig train;
    LossConfig loss;
    InvariantConfig invariant;
    std::optional<ChannelStats> reference;  ///< defaults to the training set's own stats
    int k_max = 0;                          ///< 0 picks the default bound
    int augment_copies = 1;                 ///< colour-statistics synthetics per source image
    EvalOptions eval;
};

struct AblationRow {
    std::string variant;
    double precision = 0, dsc = 0, mcc = 0;
    std::optional<double> auc;
    size_t train_samples = 0;
    double wall_time = 0;
};

void to_json(nlohmann::json& j, const AblationRow& row);

/// Trains one model per variant with identical seeds and evaluates on `test`.
std::vector<AblationRow> ablation_run(const std::vector<FundusSample>& train_set,
                                      const std::vector<FundusSample>& test_set,
                                      const std::vector<std::string>& variants,
                                      const AblationSettings& settings);

/// Columns: variant,precision,dsc,auc,mcc
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace deffa
