#include "deffa/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cv_bridge.hpp"
#include "deffa/errors.hpp"
#include "deffa/log.hpp"

namespace fs = std::filesystem;

namespace deffa {

namespace {

void check_dims(int height, int width)
{
    if (height < 0 || width < 0) throw ValidationError("image dimensions must be non-negative");
}

double full_scale(int depth)
{
    switch (depth) {
    case CV_8U: return 255.0;
    case CV_16U: return 65535.0;
    case CV_32F:
    case CV_64F: return 1.0;
    default: throw ValidationError("unsupported pixel depth");
    }
}

cv::Mat read_raw(const fs::path& path)
{
    if (!fs::is_regular_file(path)) throw IoError("cannot read " + path.string() + ": no such file");
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot decode " + path.string());
    return mat;
}

void ensure_parent(const fs::path& path)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_mat(const fs::path& path, const cv::Mat& mat)
{
    ensure_parent(path);
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw IoError("cannot write " + path.string());
}

bool is_raster(const fs::path& path)
{
    static const std::vector<std::string> exts{".png", ".tif", ".tiff", ".jpg", ".jpeg",
                                               ".bmp", ".ppm", ".pgm"};
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::find(exts.begin(), exts.end(), ext) != exts.end();
}

std::map<std::string, fs::path> rasters_by_stem(const fs::path& dir)
{
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_raster(entry.path())) out[entry.path().stem().string()] = entry.path();
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

BinaryMask::BinaryMask(int height, int width, uint8_t fill)
    : height_(height), width_(width)
{
    check_dims(height, width);
    pixels_.assign(static_cast<size_t>(height) * width, fill ? 1 : 0);
}

BinaryMask::BinaryMask(int height, int width, std::vector<uint8_t> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels))
{
    check_dims(height, width);
    if (pixels_.size() != static_cast<size_t>(height) * width)
        throw ValidationError("mask pixel count does not match its dimensions");
    for (auto p : pixels_)
        if (p > 1) throw ValidationError("mask values must be 0 or 1");
}

size_t BinaryMask::ones() const
{
    return static_cast<size_t>(std::count(pixels_.begin(), pixels_.end(), uint8_t{1}));
}

GrayField::GrayField(int height, int width, double fill) : height_(height), width_(width)
{
    check_dims(height, width);
    pixels_.assign(static_cast<size_t>(height) * width, fill);
}

GrayField::GrayField(int height, int width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels))
{
    check_dims(height, width);
    if (pixels_.size() != static_cast<size_t>(height) * width)
        throw ValidationError("field pixel count does not match its dimensions");
    for (double v : pixels_)
        if (!std::isfinite(v)) throw ValidationError("field values must be finite");
}

ColorImage::ColorImage(int height, int width, double fill) : height_(height), width_(width)
{
    check_dims(height, width);
    pixels_.assign(static_cast<size_t>(height) * width * kChannels, fill);
}

ColorImage::ColorImage(int height, int width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels))
{
    check_dims(height, width);
    if (pixels_.size() != static_cast<size_t>(height) * width * kChannels)
        throw ValidationError("image pixel count does not match its dimensions");
}

GrayField ColorImage::channel(int c) const
{
    if (c < 0 || c >= kChannels) throw ValidationError("channel index out of range");
    std::vector<double> out(pixel_count());
    for (size_t i = 0; i < out.size(); ++i) out[i] = pixels_[i * kChannels + c];
    return GrayField(height_, width_, std::move(out));
}

void FundusSample::validate() const
{
    if (!(image.size() == vessel_mask.size()) || !(image.size() == fov_mask.size())) {
        throw ValidationError("sample '" + id + "': image " + std::to_string(image.height()) + "x" +
                              std::to_string(image.width()) + ", vessel mask " +
                              std::to_string(vessel_mask.height()) + "x" +
                              std::to_string(vessel_mask.width()) + ", FOV mask " +
                              std::to_string(fov_mask.height()) + "x" +
                              std::to_string(fov_mask.width()) + " must share dimensions");
    }
}

// ---------------------------------------------------------------------------

ColorImage read_color_image(const fs::path& path)
{
    cv::Mat raw = read_raw(path);
    cv::Mat rgb;
    switch (raw.channels()) {
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default:
        throw ValidationError(path.string() + ": expected a 3-channel color image, got " +
                              std::to_string(raw.channels()) + " channel(s)");
    }
    cv::Mat scaled;
    rgb.convertTo(scaled, CV_64FC3, 1.0 / full_scale(rgb.depth()));
    return detail::color_from_mat(scaled);
}

BinaryMask read_mask(const fs::path& path)
{
    cv::Mat raw = read_raw(path);
    cv::Mat gray;
    if (raw.channels() == 1) {
        gray = raw;
    } else {
        cv::extractChannel(raw, gray, 0);
    }
    cv::Mat scaled;
    gray.convertTo(scaled, CV_64F, 1.0 / full_scale(gray.depth()));
    cv::Mat binary = scaled >= 0.5;
    return detail::mask_from_mat(binary);
}

FundusSample load_sample(const fs::path& image_path, const fs::path& mask_path,
                         const std::optional<fs::path>& fov_path, const std::string& source_dataset)
{
    FundusSample sample;
    sample.id = image_path.stem().string();
    sample.source_dataset = source_dataset;
    sample.image = read_color_image(image_path);
    sample.vessel_mask = read_mask(mask_path);
    if (fov_path) {
        sample.fov_mask = read_mask(*fov_path);
    } else {
        logger()->warn("no FOV mask for '{}'; using an all-ones field of view", sample.id);
        sample.fov_mask = BinaryMask(sample.image.height(), sample.image.width(), 1);
    }
    sample.validate();
    return sample;
}

std::vector<FundusSample> load_dataset(const fs::path& root, const std::string& source_dataset)
{
    const auto images = rasters_by_stem(root / "images");
    if (images.empty()) throw IoError("no images found under " + (root / "images").string());
    const auto masks = rasters_by_stem(root / "masks");
    const auto fovs = rasters_by_stem(root / "fov");
    const auto base = root.has_filename() ? root.filename() : root.parent_path().filename();
    const std::string name = source_dataset.empty() ? base.string() : source_dataset;

    std::vector<FundusSample> out;
    out.reserve(images.size());
    for (const auto& [stem, image_path] : images) {
        auto mask = masks.find(stem);
        if (mask == masks.end())
            throw ValidationError("no vessel mask for '" + stem + "' in " + (root / "masks").string());
        auto fov = fovs.find(stem);
        std::optional<fs::path> fov_path;
        if (fov != fovs.end()) fov_path = fov->second;
        out.push_back(load_sample(image_path, mask->second, fov_path, name));
    }
    return out;
}

void write_png(const fs::path& path, const ColorImage& image)
{
    cv::Mat rgb8, bgr8;
    detail::to_mat(image).convertTo(rgb8, CV_8UC3, 255.0);
    cv::cvtColor(rgb8, bgr8, cv::COLOR_RGB2BGR);
    write_mat(path, bgr8);
}

void write_png(const fs::path& path, const BinaryMask& mask)
{
    write_mat(path, detail::to_mat(mask) * 255);
}

void write_png(const fs::path& path, const GrayField& field)
{
    cv::Mat mat(field.height(), field.width(), CV_64FC1);
    std::copy(field.pixels().begin(), field.pixels().end(), mat.ptr<double>());
    cv::Mat out;
    mat.convertTo(out, CV_8UC1, 255.0);
    write_mat(path, out);
}

void save_sample(const FundusSample& sample, const fs::path& root)
{
    write_png(root / "images" / (sample.id + ".png"), sample.image);
    write_png(root / "masks" / (sample.id + ".png"), sample.vessel_mask);
    write_png(root / "fov" / (sample.id + ".png"), sample.fov_mask);
}

// ---------------------------------------------------------------------------

FundusSample resize_sample(const FundusSample& sample, Size2 target)
{
    if (target.height <= 0 || target.width <= 0 || target.height % 8 != 0 || target.width % 8 != 0) {
        throw ValidationError("resize target " + std::to_string(target.height) + "x" +
                              std::to_string(target.width) +
                              " must be positive and divisible by 8 (the network downsamples 2x three times)");
    }
    sample.validate();
    FundusSample out = sample;
    if (sample.size() == target) return out;

    const cv::Size dsize(target.width, target.height);
    cv::Mat image;
    cv::resize(detail::to_mat(sample.image), image, dsize, 0, 0, cv::INTER_LINEAR);
    out.image = detail::color_from_mat(image);

    out.vessel_mask = resize_mask(sample.vessel_mask, target);
    out.fov_mask = resize_mask(sample.fov_mask, target);
    return out;
}

BinaryMask resize_mask(const BinaryMask& mask, Size2 target)
{
    if (target.height <= 0 || target.width <= 0) throw ValidationError("resize target must be positive");
    if (mask.size() == target) return mask;
    cv::Mat resized;
    cv::resize(detail::to_mat(mask), resized, cv::Size(target.width, target.height), 0, 0,
               cv::INTER_NEAREST_EXACT);
    return detail::mask_from_mat(resized);
}

GrayField green_channel(const ColorImage& image)
{
    return image.channel(1);
}

GrayField green_channel(const FundusSample& sample)
{
    return green_channel(sample.image);
}

double jaccard_distance(const BinaryMask& a, const BinaryMask& b)
{
    if (!(a.size() == b.size())) {
        throw ValidationError("jaccard_distance: masks differ in size (" + std::to_string(a.height()) +
                              "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                              "x" + std::to_string(b.width()) + ")");
    }
    size_t inter = 0;
    size_t uni = 0;
    const auto pa = a.pixels();
    const auto pb = b.pixels();
    for (size_t i = 0; i < pa.size(); ++i) {
        inter += pa[i] & pb[i];
        uni += pa[i] | pb[i];
    }
    if (uni == 0) return 0.0;
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace deffa
