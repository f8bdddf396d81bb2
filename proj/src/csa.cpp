#include "deffa/csa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <opencv2/imgproc.hpp>

#include "cv_bridge.hpp"
#include "deffa/errors.hpp"
#include "rng.hpp"

namespace deffa {

void to_json(nlohmann::json& j, const ChannelStats& stats)
{
    j = nlohmann::json{{"mean", stats.mean},
                       {"std", stats.std},
                       {"pixel_count", stats.pixel_count},
                       {"image_count", stats.image_count},
                       {"reference_name", stats.reference_name}};
}

void from_json(const nlohmann::json& j, ChannelStats& stats)
{
    j.at("mean").get_to(stats.mean);
    j.at("std").get_to(stats.std);
    j.at("pixel_count").get_to(stats.pixel_count);
    j.at("image_count").get_to(stats.image_count);
    stats.reference_name = j.value("reference_name", std::string{});
    for (double s : stats.std)
        if (s < 0.0) throw ValidationError("channel std must be non-negative");
    if (stats.pixel_count == 0) throw ValidationError("channel stats need a positive pixel count");
}

void save_stats(const std::filesystem::path& path, const ChannelStats& stats)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << nlohmann::json(stats).dump(2) << '\n';
}

ChannelStats load_stats(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in).get<ChannelStats>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed channel stats in " + path.string() + ": " + e.what());
    }
}

void AugmentConfig::validate() const
{
    if (alpha_range.lo > alpha_range.hi || rotation_degrees.lo > rotation_degrees.hi)
        throw ValidationError("interval lower bound exceeds upper bound");
    if (alpha_range.lo < 0.0 || alpha_range.hi > 1.0)
        throw ValidationError("alpha_range must lie within [0,1]");
}

ChannelStats reference_stats(std::span<const ColorImage> images, std::string reference_name)
{
    if (images.empty()) throw ValidationError("reference_stats needs at least one image");
    ChannelStats stats;
    stats.reference_name = std::move(reference_name);
    stats.image_count = images.size();
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    for (const auto& img : images) {
        stats.pixel_count += img.pixel_count();
        const auto data = img.data();
        for (size_t i = 0; i < data.size(); ++i) sum[i % 3] += data[i];
    }
    if (stats.pixel_count == 0) throw ValidationError("reference images contain no pixels");
    const auto n = static_cast<double>(stats.pixel_count);
    for (size_t c = 0; c < 3; ++c) stats.mean[c] = sum[c] / n;

    std::array<double, 3> sq{0.0, 0.0, 0.0};
    for (const auto& img : images) {
        const auto data = img.data();
        for (size_t i = 0; i < data.size(); ++i) {
            const double d = data[i] - stats.mean[i % 3];
            sq[i % 3] += d * d;
        }
    }
    for (size_t c = 0; c < 3; ++c) stats.std[c] = std::sqrt(sq[c] / n);
    return stats;
}

ColorImage csa_transform(const ColorImage& image, const ChannelStats& stats, double alpha, bool clip)
{
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("blend factor alpha must lie in [0,1]");
    ColorImage out = image;
    std::array<double, 3> inv_std{};
    for (size_t c = 0; c < 3; ++c) inv_std[c] = 1.0 / std::max(stats.std[c], kStdFloor);
    auto data = out.data();
    for (size_t i = 0; i < data.size(); ++i) {
        const size_t c = i % 3;
        const double p = data[i];
        double v = alpha * ((p - stats.mean[c]) * inv_std[c]) + (1.0 - alpha) * p;
        data[i] = clip ? std::clamp(v, 0.0, 1.0) : v;
    }
    return out;
}

FundusSample augment_sample(const FundusSample& sample, const ChannelStats& stats,
                            const AugmentConfig& cfg)
{
    cfg.validate();
    sample.validate();
    std::mt19937_64 rng(cfg.seed);
    auto draw = [&rng](Interval r) {
        return r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    };
    const double alpha = draw(cfg.alpha_range);
    const double angle = draw(cfg.rotation_degrees);

    FundusSample out = sample;
    out.image = csa_transform(sample.image, stats, alpha);
    out.synthetic = true;
    out.id = sample.id + "_csa";
    if (angle == 0.0) return out;

    const cv::Point2f centre(static_cast<float>(sample.image.width() - 1) / 2.0f,
                             static_cast<float>(sample.image.height() - 1) / 2.0f);
    const cv::Mat rotation = cv::getRotationMatrix2D(centre, angle, 1.0);
    const cv::Size dsize(sample.image.width(), sample.image.height());

    cv::Mat rotated;
    cv::warpAffine(detail::to_mat(out.image), rotated, rotation, dsize, cv::INTER_LINEAR,
                   cv::BORDER_CONSTANT, cv::Scalar::all(0));
    out.image = detail::color_from_mat(rotated);
    for (double& v : out.image.data()) v = std::clamp(v, 0.0, 1.0);

    auto rotate_mask = [&](const BinaryMask& mask) {
        cv::Mat m;
        cv::warpAffine(detail::to_mat(mask), m, rotation, dsize, cv::INTER_NEAREST,
                       cv::BORDER_CONSTANT, cv::Scalar::all(0));
        return detail::mask_from_mat(m);
    };
    out.vessel_mask = rotate_mask(sample.vessel_mask);
    out.fov_mask = rotate_mask(sample.fov_mask);
    return out;
}

std::vector<FundusSample> augment_dataset(const std::vector<FundusSample>& samples,
                                          const ChannelStats& stats, const AugmentConfig& cfg,
                                          int copies)
{
    if (copies < 0) throw ValidationError("augmentation copy count must be non-negative");
    std::vector<FundusSample> out = samples;
    out.reserve(samples.size() * static_cast<size_t>(copies + 1));
    for (int c = 0; c < copies; ++c) {
        for (size_t i = 0; i < samples.size(); ++i) {
            AugmentConfig draw = cfg;
            draw.seed = derive_seed(derive_seed(cfg.seed, static_cast<uint64_t>(c)), i);
            auto aug = augment_sample(samples[i], stats, draw);
            if (copies > 1) aug.id += std::to_string(c);
            out.push_back(std::move(aug));
        }
    }
    return out;
}

}  // namespace deffa
