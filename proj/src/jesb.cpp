#include "deffa/jesb.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "deffa/errors.hpp"
#include "deffa/invariant.hpp"
#include "deffa/log.hpp"
#include "rng.hpp"

namespace deffa {

namespace {

constexpr int kMaxRounds = 100;
constexpr double kExhaustiveLimit = 20000;  ///< medoid sets enumerated outright below this

double combination_count(size_t n, size_t k)
{
    double c = 1.0;
    for (size_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
    return c;
}

std::vector<int> nearest_medoid(const DistanceMatrix& dist, const std::vector<size_t>& medoids)
{
    const size_t n = dist.size();
    std::vector<int> labels(n, 0);
    for (size_t i = 0; i < n; ++i) {
        auto own = std::find(medoids.begin(), medoids.end(), i);
        if (own != medoids.end()) {
            labels[i] = static_cast<int>(own - medoids.begin());
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (size_t m = 0; m < medoids.size(); ++m) {
            const double d = dist.at(i, medoids[m]);
            if (d < best) {
                best = d;
                labels[i] = static_cast<int>(m);
            }
        }
    }
    return labels;
}

double assignment_cost(const DistanceMatrix& dist, const std::vector<size_t>& medoids,
                       const std::vector<int>& labels)
{
    double cost = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) cost += dist.at(i, medoids[static_cast<size_t>(labels[i])]);
    return cost;
}

// Renumber clusters by order of first appearance so labels do not depend on
// medoid discovery order.
void canonicalize(MedoidClustering& c)
{
    std::vector<int> remap(c.medoids.size(), -1);
    int next = 0;
    for (int& label : c.labels) {
        auto& target = remap[static_cast<size_t>(label)];
        if (target < 0) target = next++;
        label = target;
    }
    std::vector<size_t> medoids(c.medoids.size());
    for (size_t m = 0; m < remap.size(); ++m) medoids[static_cast<size_t>(remap[m])] = c.medoids[m];
    c.medoids = std::move(medoids);
}

}  // namespace

DistanceMatrix::DistanceMatrix(std::vector<std::string> ids, std::vector<double> entries)
    : ids_(std::move(ids)), entries_(std::move(entries))
{
    if (entries_.size() != ids_.size() * ids_.size())
        throw ValidationError("distance matrix must be N x N for N sample ids");
}

DistanceMatrix pairwise_distance(std::span<const BinaryMask> masks, std::vector<std::string> ids)
{
    const size_t n = masks.size();
    if (n < 2) throw ValidationError("pairwise_distance needs at least 2 masks");
    for (const auto& m : masks) {
        if (!(m.size() == masks.front().size()))
            throw ValidationError("pairwise_distance: all masks must share dimensions (resize first)");
    }
    if (ids.empty()) {
        for (size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    } else if (ids.size() != n) {
        throw ValidationError("pairwise_distance: one id per mask required");
    }
    std::vector<double> entries(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            const double d = jaccard_distance(masks[i], masks[j]);
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    return DistanceMatrix(std::move(ids), std::move(entries));
}

double silhouette_score(const DistanceMatrix& dist, std::span<const int> labels)
{
    const size_t n = dist.size();
    if (labels.size() != n) throw ValidationError("silhouette_score: one label per sample required");
    int max_label = -1;
    for (int l : labels) {
        if (l < 0) throw ValidationError("silhouette_score: labels must be non-negative");
        max_label = std::max(max_label, l);
    }
    std::vector<size_t> sizes(static_cast<size_t>(max_label + 1), 0);
    for (int l : labels) ++sizes[static_cast<size_t>(l)];
    const auto populated = std::count_if(sizes.begin(), sizes.end(), [](size_t s) { return s > 0; });
    if (populated < 2) throw ValidationError("silhouette_score is undefined for fewer than 2 clusters");

    double total = 0.0;
    std::vector<double> sums(sizes.size());
    for (size_t i = 0; i < n; ++i) {
        const auto own = static_cast<size_t>(labels[i]);
        if (sizes[own] == 1) continue;  // singleton: s = 0
        std::fill(sums.begin(), sums.end(), 0.0);
        for (size_t j = 0; j < n; ++j)
            if (j != i) sums[static_cast<size_t>(labels[j])] += dist.at(i, j);
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < sizes.size(); ++c)
            if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

MedoidClustering cluster_medoids(const DistanceMatrix& dist, int k, uint64_t seed)
{
    const size_t n = dist.size();
    if (k < 2 || static_cast<size_t>(k) > n - 1 || n < 3) {
        throw ValidationError("cluster_medoids: k must satisfy 2 <= k <= N-1 (k=" + std::to_string(k) +
                              ", N=" + std::to_string(n) + ")");
    }
    const auto kk = static_cast<size_t>(k);

    // Farthest-first from a seeded start.
    std::mt19937_64 rng(seed);
    std::vector<size_t> medoids{std::uniform_int_distribution<size_t>(0, n - 1)(rng)};
    std::vector<double> nearest(n);
    for (size_t i = 0; i < n; ++i) nearest[i] = dist.at(i, medoids[0]);
    while (medoids.size() < kk) {
        size_t pick = n;
        double far = -1.0;
        for (size_t i = 0; i < n; ++i) {
            if (std::find(medoids.begin(), medoids.end(), i) != medoids.end()) continue;
            if (nearest[i] > far) {
                far = nearest[i];
                pick = i;
            }
        }
        medoids.push_back(pick);
        for (size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], dist.at(i, pick));
    }

    MedoidClustering result;
    result.labels = nearest_medoid(dist, medoids);
    for (result.iterations = 1; result.iterations <= kMaxRounds; ++result.iterations) {
        bool moved = false;
        for (size_t m = 0; m < kk; ++m) {
            size_t best = medoids[m];
            double best_sum = std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < n; ++i) {
                if (static_cast<size_t>(result.labels[i]) != m) continue;
                double sum = 0.0;
                for (size_t j = 0; j < n; ++j)
                    if (static_cast<size_t>(result.labels[j]) == m) sum += dist.at(i, j);
                // Keep the current medoid on ties so the loop terminates.
                if (sum < best_sum || (sum == best_sum && i == medoids[m])) {
                    best_sum = sum;
                    best = i;
                }
            }
            if (best != medoids[m]) {
                medoids[m] = best;
                moved = true;
            }
        }
        auto labels = nearest_medoid(dist, medoids);
        if (!moved && labels == result.labels) break;
        result.labels = std::move(labels);
    }

    // PAM swap phase: take the best improving (medoid, non-medoid) exchange.
    double cost = assignment_cost(dist, medoids, result.labels);
    for (int round = 0; round < kMaxRounds; ++round) {
        double best_cost = cost;
        size_t best_m = kk, best_i = n;
        for (size_t m = 0; m < kk; ++m) {
            for (size_t i = 0; i < n; ++i) {
                if (std::find(medoids.begin(), medoids.end(), i) != medoids.end()) continue;
                auto trial = medoids;
                trial[m] = i;
                const double c = assignment_cost(dist, trial, nearest_medoid(dist, trial));
                if (c < best_cost - 1e-12) {
                    best_cost = c;
                    best_m = m;
                    best_i = i;
                }
            }
        }
        if (best_m == kk) break;
        medoids[best_m] = best_i;
        result.labels = nearest_medoid(dist, medoids);
        cost = best_cost;
    }

    // Small instances: PAM can stall in a local optimum, so enumerate every
    // medoid set and keep the global best (the heuristic result wins ties).
    if (combination_count(n, kk) <= kExhaustiveLimit) {
        std::vector<size_t> trial(kk);
        for (size_t i = 0; i < kk; ++i) trial[i] = i;
        while (true) {
            const double c = assignment_cost(dist, trial, nearest_medoid(dist, trial));
            if (c < cost - 1e-12) {
                cost = c;
                medoids = trial;
            }
            size_t pos = kk;
            while (pos > 0 && trial[pos - 1] == n - kk + pos - 1) --pos;
            if (pos == 0) break;
            ++trial[pos - 1];
            for (size_t j = pos; j < kk; ++j) trial[j] = trial[j - 1] + 1;
        }
        result.labels = nearest_medoid(dist, medoids);
    }

    result.medoids = std::move(medoids);
    result.cost = assignment_cost(dist, result.medoids, result.labels);
    canonicalize(result);
    return result;
}

double ClusterModel::best_silhouette() const
{
    if (silhouette_by_k.empty()) return 0.0;
    return silhouette_by_k.at(k_star);
}

void to_json(nlohmann::json& j, const ClusterModel& model)
{
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& [k, s] : model.silhouette_by_k) grid.push_back({{"k", k}, {"silhouette", s}});
    j = nlohmann::json{{"skipped", model.skipped},
                       {"k_star", model.k_star},
                       {"k_grid", grid},
                       {"labels", model.labels},
                       {"medoid_ids", model.medoid_ids},
                       {"cluster_sizes", model.cluster_sizes},
                       {"target_size", model.target_size},
                       {"deficits", model.deficits}};
}

int default_k_max(size_t sample_count)
{
    return static_cast<int>(std::min<size_t>(10, sample_count > 0 ? sample_count - 1 : 0));
}

ClusterModel select_k(const DistanceMatrix& dist, int k_max, uint64_t seed)
{
    if (k_max < 2) throw ValidationError("k_max must be at least 2, got " + std::to_string(k_max));
    ClusterModel model;
    const size_t n = dist.size();
    if (n < 4) {
        model.skipped = true;
        return model;
    }
    const int upper = std::min(k_max, static_cast<int>(n) - 1);
    MedoidClustering best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 2; k <= upper; ++k) {
        auto clustering = cluster_medoids(dist, k, seed);
        const double s = silhouette_score(dist, clustering.labels);
        model.silhouette_by_k[k] = s;
        if (s > best_score) {
            best_score = s;
            best = std::move(clustering);
            model.k_star = k;
        }
    }
    model.labels = best.labels;
    for (size_t m : best.medoids) model.medoid_ids.push_back(dist.sample_ids()[m]);
    model.cluster_sizes.assign(static_cast<size_t>(model.k_star), 0);
    for (int l : model.labels) ++model.cluster_sizes[static_cast<size_t>(l)];
    model.target_size = *std::max_element(model.cluster_sizes.begin(), model.cluster_sizes.end());
    for (size_t s : model.cluster_sizes) model.deficits.push_back(model.target_size - s);
    return model;
}

FundusSample synthesize_variant(const FundusSample& sample, uint64_t seed, const SynthesisConfig& cfg)
{
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    std::array<double, 3> gain{}, offset{};
    for (int c = 0; c < 3; ++c) {
        gain[static_cast<size_t>(c)] = uniform(cfg.gain_min, cfg.gain_max);
        offset[static_cast<size_t>(c)] = uniform(cfg.offset_min, cfg.offset_max);
    }
    const double amount = uniform(cfg.sharpen_min, cfg.sharpen_max);
    const double contrast = uniform(cfg.contrast_min, cfg.contrast_max);

    FundusSample out = sample;
    auto& img = out.image;
    const int h = img.height();
    const int w = img.width();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = img.at(y, x, c) * gain[static_cast<size_t>(c)] + offset[static_cast<size_t>(c)];

    InvariantConfig blur;
    blur.window_size = cfg.sharpen_window;
    for (int c = 0; c < 3; ++c) {
        const auto channel = img.channel(c);
        const auto smooth = local_average(channel, blur);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(y, x, c) = channel.at(y, x) + amount * (channel.at(y, x) - smooth.at(y, x));
    }

    const auto values = img.data();
    const double mean = values.empty() ? 0.0
                                       : std::accumulate(values.begin(), values.end(), 0.0) /
                                             static_cast<double>(values.size());
    for (double& v : img.data()) v = std::clamp(mean + contrast * (v - mean), 0.0, 1.0);

    out.id = sample.id + "_syn";
    out.synthetic = true;
    return out;
}

BalanceResult balance_dataset(const std::vector<FundusSample>& samples, int k_max, uint64_t seed,
                              const SynthesisConfig& cfg)
{
    if (k_max < 2) throw ValidationError("k_max must be at least 2, got " + std::to_string(k_max));
    BalanceResult result;
    result.samples = samples;
    if (samples.size() < 4) {
        logger()->info("balancing skipped: {} sample(s), at least 4 are needed", samples.size());
        result.model.skipped = true;
        return result;
    }

    const Size2 common = samples.front().vessel_mask.size();
    std::vector<BinaryMask> masks;
    std::vector<std::string> ids;
    masks.reserve(samples.size());
    for (const auto& s : samples) {
        masks.push_back(resize_mask(s.vessel_mask, common));
        ids.push_back(s.id);
    }
    const auto dist = pairwise_distance(masks, ids);
    result.model = select_k(dist, k_max, seed);

    if (result.model.best_silhouette() <= 0.0) {
        logger()->info("balancing is a no-op: no cluster structure (best silhouette {:.4f})",
                       result.model.best_silhouette());
        std::fill(result.model.deficits.begin(), result.model.deficits.end(), 0);
        return result;
    }

    std::vector<std::vector<size_t>> members(static_cast<size_t>(result.model.k_star));
    for (size_t i = 0; i < samples.size(); ++i)
        members[static_cast<size_t>(result.model.labels[i])].push_back(i);

    std::mt19937_64 picker(seed);
    uint64_t item = 0;
    for (size_t c = 0; c < members.size(); ++c) {
        std::uniform_int_distribution<size_t> pick(0, members[c].size() - 1);
        for (size_t g = 0; g < result.model.deficits[c]; ++g, ++item) {
            const auto& source = samples[members[c][pick(picker)]];
            auto synthetic = synthesize_variant(source, derive_seed(seed, item), cfg);
            synthetic.id = source.id + "_jesb" + std::to_string(item);
            result.samples.push_back(std::move(synthetic));
        }
    }
    result.synthetic_count = item;
    return result;
}

}  // namespace deffa
