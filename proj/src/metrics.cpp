#include "deffa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deffa/errors.hpp"

namespace deffa {

namespace {

void check_shapes(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov)
{
    if (!(prob.size() == gt.size()) || !(prob.size() == fov.size())) {
        throw ValidationError("probability map " + std::to_string(prob.height()) + "x" +
                              std::to_string(prob.width()) + ", ground truth " +
                              std::to_string(gt.height()) + "x" + std::to_string(gt.width()) +
                              " and FOV " + std::to_string(fov.height()) + "x" +
                              std::to_string(fov.width()) + " must share dimensions");
    }
    if (fov.ones() == 0) throw ValidationError("FOV mask is empty");
}

double ratio(uint64_t num, uint64_t den, const char* name, std::vector<std::string>& degenerate)
{
    if (den == 0) {
        degenerate.emplace_back(name);
        return 1.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o)
{
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
}

ConfusionCounts confusion(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov,
                          double threshold)
{
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must lie in (0,1)");
    check_shapes(prob, gt, fov);
    ConfusionCounts c;
    const auto p = prob.pixels();
    const auto g = gt.pixels();
    const auto f = fov.pixels();
    for (size_t i = 0; i < p.size(); ++i) {
        if (!f[i]) continue;
        const bool pred = p[i] >= threshold;
        if (pred && g[i]) ++c.tp;
        else if (pred) ++c.fp;
        else if (g[i]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double matthews_corrcoef(const ConfusionCounts& c)
{
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (den == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(den);
}

MetricsReport segmentation_metrics(const ConfusionCounts& c)
{
    MetricsReport r;
    r.counts = c;
    r.acc = ratio(c.tp + c.tn, c.total(), "acc", r.degenerate);
    r.recall = ratio(c.tp, c.tp + c.fn, "recall", r.degenerate);
    r.specificity = ratio(c.tn, c.tn + c.fp, "specificity", r.degenerate);
    r.precision = ratio(c.tp, c.tp + c.fp, "precision", r.degenerate);
    r.iou = ratio(c.tp, c.tp + c.fp + c.fn, "iou", r.degenerate);
    r.dsc = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "dsc", r.degenerate);
    r.mcc = matthews_corrcoef(c);
    return r;
}

double auc_from_scores(std::span<const double> scores, std::span<const uint8_t> labels)
{
    if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
    const size_t n = scores.size();
    const auto n_pos = static_cast<size_t>(std::count(labels.begin(), labels.end(), uint8_t{1}));
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw DegenerateError("AUC needs both positive and negative pixels (got " +
                              std::to_string(n_pos) + " positive, " + std::to_string(n_neg) +
                              " negative)");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Sum of positive ranks (1-based), ties sharing their mean rank.
    double rank_sum = 0.0;
    for (size_t i = 0; i < n;) {
        size_t j = i;
        size_t pos_in_group = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            pos_in_group += labels[order[j]];
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        rank_sum += midrank * static_cast<double>(pos_in_group);
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

void collect_fov_pixels(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov,
                        std::vector<double>& scores, std::vector<uint8_t>& labels)
{
    check_shapes(prob, gt, fov);
    const auto p = prob.pixels();
    const auto g = gt.pixels();
    const auto f = fov.pixels();
    for (size_t i = 0; i < p.size(); ++i) {
        if (!f[i]) continue;
        scores.push_back(p[i]);
        labels.push_back(g[i]);
    }
}

double roc_auc(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov)
{
    std::vector<double> scores;
    std::vector<uint8_t> labels;
    collect_fov_pixels(prob, gt, fov, scores, labels);
    return auc_from_scores(scores, labels);
}

ColorImage overlay(const GrayField& prob, const BinaryMask& gt, const BinaryMask& fov, double threshold)
{
    check_shapes(prob, gt, fov);
    ColorImage out(prob.height(), prob.width());
    for (int y = 0; y < prob.height(); ++y) {
        for (int x = 0; x < prob.width(); ++x) {
            double rgb[3] = {0.0, 0.0, 0.0};
            if (!fov.at(y, x)) {
                rgb[0] = rgb[1] = rgb[2] = 0.2;
            } else {
                const bool pred = prob.at(y, x) >= threshold;
                const bool truth = gt.at(y, x) != 0;
                if (pred && truth) rgb[0] = rgb[1] = rgb[2] = 1.0;
                else if (pred) rgb[0] = 1.0;
                else if (truth) rgb[2] = 1.0;
            }
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb[c];
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const ConfusionCounts& c)
{
    j = nlohmann::json{{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

void to_json(nlohmann::json& j, const MetricsReport& r)
{
    j = nlohmann::json{{"acc", r.acc},
                       {"recall", r.recall},
                       {"specificity", r.specificity},
                       {"precision", r.precision},
                       {"iou", r.iou},
                       {"dsc", r.dsc},
                       {"mcc", r.mcc},
                       {"counts", r.counts},
                       {"threshold", r.threshold},
                       {"sample_ids", r.sample_ids},
                       {"degenerate", r.degenerate}};
    j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
}

}  // namespace deffa
