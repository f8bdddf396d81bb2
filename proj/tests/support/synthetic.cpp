#include "synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

namespace deffa::testing {

namespace {

void draw_vessel(cv::Mat& canvas, std::mt19937_64& rng, cv::Point2d p, double heading, double width,
                 int depth, double step)
{
    std::uniform_real_distribution<double> turn(-0.25, 0.25);
    std::uniform_int_distribution<int> length(10, 18);
    const int n = length(rng);
    for (int i = 0; i < n; ++i) {
        heading += turn(rng);
        cv::Point2d q = p + cv::Point2d(std::cos(heading), std::sin(heading)) * step;
        cv::line(canvas, cv::Point(cvRound(p.x), cvRound(p.y)), cv::Point(cvRound(q.x), cvRound(q.y)),
                 cv::Scalar(255), std::max(1, cvRound(width)), cv::LINE_8);
        p = q;
        if (depth > 0 && i == n / 2) {
            const double side = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5 ? -1.0 : 1.0;
            draw_vessel(canvas, rng, p, heading + side * 0.7, std::max(2.0, width - 1.0), depth - 1, step);
        }
    }
}

}  // namespace

FundusSample synthetic_fundus(int size, uint64_t seed, const std::string& id, const std::string& dataset)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double c = (size - 1) / 2.0;
    const double radius = 0.47 * size;
    const double step = size / 24.0;

    cv::Mat vessels = cv::Mat::zeros(size, size, CV_8UC1);
    const int trunks = 3;
    for (int t = 0; t < trunks; ++t) {
        const double angle = 2.0 * std::numbers::pi * (t + unit(rng) * 0.5) / trunks;
        const cv::Point2d start(c + 0.15 * size * std::cos(angle), c + 0.15 * size * std::sin(angle));
        draw_vessel(vessels, rng, start, angle, 4.0, 2, step);
    }

    FundusSample s;
    s.id = id;
    s.source_dataset = dataset;
    s.image = ColorImage(size, size);
    s.vessel_mask = BinaryMask(size, size);
    s.fov_mask = BinaryMask(size, size);
    std::normal_distribution<double> noise(0.0, 0.015);
    const double tint = 0.05 * (unit(rng) - 0.5);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double r = std::hypot(y - c, x - c);
            if (r > radius) continue;
            s.fov_mask.set(y, x, true);
            const bool on = vessels.at<uint8_t>(y, x) != 0;
            s.vessel_mask.set(y, x, on);
            const double shade = 1.0 - 0.35 * (r / radius) * (r / radius);
            const double base[3] = {0.75 + tint, 0.45, 0.25};
            const double vessel[3] = {0.55 + tint, 0.15, 0.12};
            for (int ch = 0; ch < 3; ++ch) {
                const double v = (on ? vessel[ch] : base[ch]) * shade + noise(rng);
                s.image.at(y, x, ch) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return s;
}

std::vector<FundusSample> synthetic_dataset(int count, int size, uint64_t seed, const std::string& dataset)
{
    std::vector<FundusSample> out;
    for (int i = 0; i < count; ++i)
        out.push_back(synthetic_fundus(size, seed * 1000 + static_cast<uint64_t>(i),
                                       dataset + "_" + std::to_string(i), dataset));
    return out;
}

GrayField random_field(int height, int width, uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GrayField f(height, width);
    for (double& v : f.pixels()) v = unit(rng);
    return f;
}

BinaryMask random_mask(int height, int width, double p_on, uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution on(p_on);
    BinaryMask m(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) m.set(y, x, on(rng));
    return m;
}

}  // namespace deffa::testing
