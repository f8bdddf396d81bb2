#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "deffa/imaging.hpp"

namespace deffa {

/// Per-channel (R,G,B) population mean and standard deviation of a
/// reference image collection.
struct ChannelStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> std{1.0, 1.0, 1.0};
    uint64_t pixel_count = 0;  ///< pixels per channel
    uint64_t image_count = 0;
    std::string reference_name;
};

void to_json(nlohmann::json& j, const ChannelStats& stats);
void from_json(const nlohmann::json& j, ChannelStats& stats);

void save_stats(const std::filesystem::path& path, const ChannelStats& stats);
ChannelStats load_stats(const std::filesystem::path& path);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct AugmentConfig {
    Interval alpha_range{0.7, 1.0};
    Interval rotation_degrees{-15.0, 15.0};
    uint64_t seed = 0;

    void validate() const;
};

ChannelStats reference_stats(std::span<const ColorImage> images, std::string reference_name = {});

/// Smallest standard deviation used as a divisor.
inline constexpr double kStdFloor = 1e-6;

/// Per channel: alpha * (p - mean) / max(std, 1e-6) + (1 - alpha) * p,
/// clipped to [0,1] unless `clip` is false.
ColorImage csa_transform(const ColorImage& image, const ChannelStats& stats, double alpha,
                         bool clip = true);

/// Seeded colour-statistics transform with a random blend factor, then a
/// common random rotation of image (bilinear) and masks (nearest), zero fill.
FundusSample augment_sample(const FundusSample& sample, const ChannelStats& stats,
                            const AugmentConfig& cfg);

/// Originals followed by `copies` synthetics per source. Copy c of sample i
/// is seeded from (cfg.seed, c, i); ids get "_csa" plus c when copies > 1.
std::vector<FundusSample> augment_dataset(const std::vector<FundusSample>& samples,
                                          const ChannelStats& stats, const AugmentConfig& cfg,
                                          int copies);

}  // namespace deffa
