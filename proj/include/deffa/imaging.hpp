#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace deffa {

/// Height/width pair in pixels.
struct Size2 {
    int height = 0;
    int width = 0;

    bool operator==(const Size2&) const = default;
};

/// 2-D {0,1} mask, row-major.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int height, int width, uint8_t fill = 0);
    BinaryMask(int height, int width, std::vector<uint8_t> pixels);

    int height() const { return height_; }
    int width() const { return width_; }
    Size2 size() const { return {height_, width_}; }
    size_t count() const { return pixels_.size(); }

    uint8_t at(int y, int x) const { return pixels_[index(y, x)]; }
    void set(int y, int x, bool on) { pixels_[index(y, x)] = on ? 1 : 0; }

    std::span<const uint8_t> pixels() const& { return pixels_; }
    std::vector<uint8_t> pixels() && { return std::move(pixels_); }  // safe in range-for over temporaries
    size_t ones() const;

    bool operator==(const BinaryMask&) const = default;

private:
    size_t index(int y, int x) const { return static_cast<size_t>(y) * width_ + x; }

    int height_ = 0;
    int width_ = 0;
    std::vector<uint8_t> pixels_;
};

/// Single-channel real field (row-major), e.g. a green channel or a
/// high-frequency residual.
class GrayField {
public:
    GrayField() = default;
    GrayField(int height, int width, double fill = 0.0);
    GrayField(int height, int width, std::vector<double> pixels);

    int height() const { return height_; }
    int width() const { return width_; }
    Size2 size() const { return {height_, width_}; }
    size_t count() const { return pixels_.size(); }

    double at(int y, int x) const { return pixels_[index(y, x)]; }
    double& at(int y, int x) { return pixels_[index(y, x)]; }

    std::span<const double> pixels() const& { return pixels_; }
    std::span<double> pixels() & { return pixels_; }
    std::vector<double> pixels() && { return std::move(pixels_); }

    bool operator==(const GrayField&) const = default;

private:
    size_t index(int y, int x) const { return static_cast<size_t>(y) * width_ + x; }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> pixels_;
};

/// Interleaved RGB image with values nominally in [0,1].
class ColorImage {
public:
    static constexpr int kChannels = 3;

    ColorImage() = default;
    ColorImage(int height, int width, double fill = 0.0);
    ColorImage(int height, int width, std::vector<double> pixels);

    int height() const { return height_; }
    int width() const { return width_; }
    Size2 size() const { return {height_, width_}; }
    size_t pixel_count() const { return static_cast<size_t>(height_) * width_; }

    double at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
    double& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }

    std::span<const double> data() const& { return pixels_; }
    std::span<double> data() & { return pixels_; }
    std::vector<double> data() && { return std::move(pixels_); }

    GrayField channel(int c) const;

    bool operator==(const ColorImage&) const = default;

private:
    size_t index(int y, int x, int c) const
    {
        return (static_cast<size_t>(y) * width_ + x) * kChannels + c;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> pixels_;
};

/// One registered (image, vessel mask, FOV mask) triple.
struct FundusSample {
    std::string id;
    ColorImage image;
    BinaryMask vessel_mask;
    BinaryMask fov_mask;
    std::string source_dataset;
    bool synthetic = false;

    Size2 size() const { return image.size(); }
    /// Throws ValidationError if dimensions disagree.
    void validate() const;
};

/// Decodes an image + mask (+ optional FOV) triple. Images are scaled to
/// [0,1] by their type's full scale; masks are thresholded at half scale.
/// A missing FOV path yields an all-ones FOV with a logged warning.
FundusSample load_sample(const std::filesystem::path& image_path,
                         const std::filesystem::path& mask_path,
                         const std::optional<std::filesystem::path>& fov_path = std::nullopt,
                         const std::string& source_dataset = {});

/// Reads every sample under `<root>/images`, pairing `<root>/masks` and
/// (when present) `<root>/fov` by file stem. Sorted by id.
std::vector<FundusSample> load_dataset(const std::filesystem::path& root,
                                       const std::string& source_dataset = {});

/// Writes image/masks into `<root>/{images,masks,fov}/<id>.png`.
void save_sample(const FundusSample& sample, const std::filesystem::path& root);

void write_png(const std::filesystem::path& path, const ColorImage& image);
void write_png(const std::filesystem::path& path, const BinaryMask& mask);
/// Values are clamped to [0,1] and quantized to 8 bits.
void write_png(const std::filesystem::path& path, const GrayField& field);

ColorImage read_color_image(const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);

/// Bilinear for the image, nearest-neighbour for masks. Target dims must be
/// divisible by 8.
FundusSample resize_sample(const FundusSample& sample, Size2 target);

/// Nearest-neighbour resample of a mask to any size.
BinaryMask resize_mask(const BinaryMask& mask, Size2 target);

/// Channel 1 (green) of the RGB image.
GrayField green_channel(const FundusSample& sample);
GrayField green_channel(const ColorImage& image);

/// 1 - |a ∩ b| / |a ∪ b|; 0 when both masks are empty.
double jaccard_distance(const BinaryMask& a, const BinaryMask& b);

}  // namespace deffa
