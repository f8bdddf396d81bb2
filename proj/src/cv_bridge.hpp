#pragma once

// OpenCV interop for the library's image types. Internal to src/.

#include <opencv2/core.hpp>

#include "deffa/imaging.hpp"

namespace deffa::detail {

inline cv::Mat to_mat(const ColorImage& image)
{
    cv::Mat mat(image.height(), image.width(), CV_64FC3);
    std::copy(image.data().begin(), image.data().end(), mat.ptr<double>());
    return mat;
}

inline ColorImage color_from_mat(const cv::Mat& mat)
{
    CV_Assert(mat.type() == CV_64FC3);
    cv::Mat contiguous = mat.isContinuous() ? mat : mat.clone();
    const auto* begin = contiguous.ptr<double>();
    return ColorImage(mat.rows, mat.cols,
                      std::vector<double>(begin, begin + static_cast<size_t>(mat.total()) * 3));
}

inline cv::Mat to_mat(const BinaryMask& mask)
{
    cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
    std::copy(mask.pixels().begin(), mask.pixels().end(), mat.ptr<uint8_t>());
    return mat;
}

inline BinaryMask mask_from_mat(const cv::Mat& mat)
{
    CV_Assert(mat.type() == CV_8UC1);
    std::vector<uint8_t> pixels(mat.total());
    size_t i = 0;
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) pixels[i++] = row[x] ? 1 : 0;
    }
    return BinaryMask(mat.rows, mat.cols, std::move(pixels));
}

}  // namespace deffa::detail
