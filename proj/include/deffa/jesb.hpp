#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deffa/imaging.hpp"

namespace deffa {

/// Symmetric N x N Jaccard distances between label masks.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(std::vector<std::string> ids, std::vector<double> entries);

    size_t size() const { return ids_.size(); }
    double at(size_t i, size_t j) const { return entries_[i * ids_.size() + j]; }
    const std::vector<std::string>& sample_ids() const { return ids_; }
    std::span<const double> entries() const { return entries_; }

private:
    std::vector<std::string> ids_;
    std::vector<double> entries_;
};

DistanceMatrix pairwise_distance(std::span<const BinaryMask> masks,
                                 std::vector<std::string> ids = {});

/// Mean silhouette (b - a) / max(a, b); singletons score 0.
double silhouette_score(const DistanceMatrix& dist, std::span<const int> labels);

struct MedoidClustering {
    std::vector<int> labels;       ///< cluster of each sample, numbered by first appearance
    std::vector<size_t> medoids;   ///< sample index of each cluster's medoid
    double cost = 0.0;             ///< sum of distances to assigned medoid
    int iterations = 0;
};

/// Seeded k-medoids over a precomputed distance matrix: farthest-first
/// initialisation from a random start, alternating assignment/medoid update
/// until stable (at most 100 rounds), then PAM swap refinement. Instances
/// with at most 20000 candidate medoid sets are solved exactly.
MedoidClustering cluster_medoids(const DistanceMatrix& dist, int k, uint64_t seed);

struct ClusterModel {
    bool skipped = false;                  ///< fewer than 4 samples
    int k_star = 0;
    std::vector<int> labels;
    std::map<int, double> silhouette_by_k;
    std::vector<std::string> medoid_ids;
    std::vector<size_t> cluster_sizes;
    size_t target_size = 0;                ///< T = largest cluster
    std::vector<size_t> deficits;          ///< T - |C_i|

    double best_silhouette() const;
};

void to_json(nlohmann::json& j, const ClusterModel& model);

/// Scores k = 2..min(k_max, N-1) and keeps the smallest k with the highest
/// silhouette. N < 4 returns a model with `skipped` set.
ClusterModel select_k(const DistanceMatrix& dist, int k_max, uint64_t seed = 0);

/// Photometric-only perturbation ranges for balancing synthetics.
struct SynthesisConfig {
    double gain_min = 0.9, gain_max = 1.1;        ///< per-channel multiplicative shift
    double offset_min = -0.05, offset_max = 0.05; ///< per-channel additive shift
    double sharpen_min = 0.5, sharpen_max = 1.5;  ///< unsharp-mask amount
    int sharpen_window = 5;
    double contrast_min = 0.8, contrast_max = 1.2;
};

/// Colour shift, unsharp-mask sharpening and contrast change, clipped to
/// [0,1]. Masks are copied unchanged.
FundusSample synthesize_variant(const FundusSample& sample, uint64_t seed,
                                const SynthesisConfig& cfg = {});

struct BalanceResult {
    std::vector<FundusSample> samples;  ///< originals, then synthetics
    ClusterModel model;
    size_t synthetic_count = 0;
};

/// Clusters vessel masks by Jaccard distance and tops every cluster up to
/// the size of the largest one with synthetic variants.
BalanceResult balance_dataset(const std::vector<FundusSample>& samples, int k_max, uint64_t seed,
                              const SynthesisConfig& cfg = {});

/// Default search bound: min(10, N - 1).
int default_k_max(size_t sample_count);

}  // namespace deffa
