#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deffa/imaging.hpp"

namespace deffa {

struct ConfusionCounts {
    uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    uint64_t total() const { return tp + tn + fp + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

/// Counts pixels inside the FOV, predicting positive where prob >= threshold.
ConfusionCounts confusion(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov,
                          double threshold = 0.5);

/// Ratio metrics whose denominator was zero are reported as 1 and listed here.
struct MetricsReport {
    double acc = 0, recall = 0, specificity = 0, precision = 0, iou = 0, dsc = 0, mcc = 0;
    std::optional<double> auc;
    ConfusionCounts counts;
    double threshold = 0.5;
    std::vector<std::string> sample_ids;
    std::vector<std::string> degenerate;
};

void to_json(nlohmann::json& j, const ConfusionCounts& counts);
void to_json(nlohmann::json& j, const MetricsReport& report);

MetricsReport segmentation_metrics(const ConfusionCounts& counts);

/// (tp*tn - fp*fn) / sqrt(...); 0 when any marginal is empty.
double matthews_corrcoef(const ConfusionCounts& counts);

/// Mann-Whitney AUC with midranks for ties. Throws DegenerateError unless
/// both classes are present.
double auc_from_scores(std::span<const double> scores, std::span<const uint8_t> labels);

/// AUC over FOV-interior pixels.
double roc_auc(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov);

/// Scores and labels of FOV-interior pixels, in raster order.
void collect_fov_pixels(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov,
                        std::vector<double>& scores, std::vector<uint8_t>& labels);

/// TP white, FP red, FN blue, TN black; pixels outside the FOV are dark grey.
ColorImage overlay(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov,
                   double threshold = 0.5);

}  // namespace deffa
