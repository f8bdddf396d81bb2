#include <doctest.h>

#include <filesystem>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "deffa/errors.hpp"
#include "deffa/imaging.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using namespace deffa;

namespace {

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("deffa_imaging_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

BinaryMask mask_from(int h, int w, std::initializer_list<std::pair<int, int>> on)
{
    BinaryMask m(h, w);
    for (auto [y, x] : on) m.set(y, x, true);
    return m;
}

}  // namespace

TEST_CASE("mask and field construction validate their contents")
{
    CHECK_THROWS_AS(BinaryMask(2, 2, std::vector<uint8_t>{0, 1, 2, 0}), ValidationError);
    CHECK_THROWS_AS(BinaryMask(2, 2, std::vector<uint8_t>{0, 1, 0}), ValidationError);
    CHECK_THROWS_AS(GrayField(1, 2, std::vector<double>{0.0, std::nan("")}), ValidationError);
    CHECK_THROWS_AS(BinaryMask(-1, 2), ValidationError);
    CHECK(BinaryMask(0, 0).count() == 0);
}

TEST_CASE("load_sample scales 8-bit images and binarizes masks")
{
    auto dir = scratch("load");
    cv::Mat img(4, 5, CV_8UC3, cv::Scalar(10, 20, 255));
    cv::Mat mask = cv::Mat::zeros(4, 5, CV_8UC1);
    mask.at<uint8_t>(1, 2) = 255;
    mask.at<uint8_t>(2, 2) = 127;  // below half scale
    mask.at<uint8_t>(3, 2) = 128;
    cv::imwrite((dir / "a.png").string(), img);
    cv::imwrite((dir / "a_mask.png").string(), mask);

    auto s = load_sample(dir / "a.png", dir / "a_mask.png", std::nullopt, "toy");
    CHECK(s.id == "a");
    CHECK(s.source_dataset == "toy");
    // BGR on disk -> RGB in memory
    CHECK(s.image.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(s.image.at(0, 0, 2) == doctest::Approx(10.0 / 255.0));
    CHECK(s.vessel_mask.at(1, 2) == 1);
    CHECK(s.vessel_mask.at(2, 2) == 0);
    CHECK(s.vessel_mask.at(3, 2) == 1);
    CHECK(s.vessel_mask.ones() == 2);
    // missing FOV -> all ones
    CHECK(s.fov_mask.ones() == 20);
}

TEST_CASE("load_sample reports missing files and size mismatches")
{
    auto dir = scratch("errors");
    cv::imwrite((dir / "img.png").string(), cv::Mat(20, 20, CV_8UC3, cv::Scalar::all(0)));
    cv::imwrite((dir / "small.png").string(), cv::Mat(10, 10, CV_8UC1, cv::Scalar::all(0)));
    cv::imwrite((dir / "gray.png").string(), cv::Mat(20, 20, CV_8UC1, cv::Scalar::all(0)));

    try {
        load_sample(dir / "nope.png", dir / "small.png");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("nope.png") != std::string::npos);
    }
    CHECK_THROWS_AS(load_sample(dir / "img.png", dir / "small.png"), ValidationError);
    CHECK_THROWS_AS(load_sample(dir / "gray.png", dir / "gray.png"), ValidationError);
}

TEST_CASE("16-bit images scale by their own full range")
{
    auto dir = scratch("sixteen");
    cv::imwrite((dir / "i.png").string(), cv::Mat(3, 3, CV_16UC3, cv::Scalar::all(65535)));
    cv::imwrite((dir / "m.png").string(), cv::Mat(3, 3, CV_16UC1, cv::Scalar::all(40000)));
    auto s = load_sample(dir / "i.png", dir / "m.png");
    CHECK(s.image.at(1, 1, 1) == doctest::Approx(1.0));
    CHECK(s.vessel_mask.ones() == 9);
}

TEST_CASE("save and load round-trip within one 8-bit step")
{
    auto dir = scratch("roundtrip");
    auto s = testing::synthetic_fundus(32, 7, "rt");
    save_sample(s, dir);
    auto loaded = load_dataset(dir);
    REQUIRE(loaded.size() == 1);
    const auto& l = loaded.front();
    CHECK(l.id == "rt");
    CHECK(l.source_dataset == dir.filename().string());
    CHECK(l.vessel_mask == s.vessel_mask);
    CHECK(l.fov_mask == s.fov_mask);
    double worst = 0.0;
    for (size_t i = 0; i < s.image.data().size(); ++i)
        worst = std::max(worst, std::abs(l.image.data()[i] - s.image.data()[i]));
    CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("load_dataset requires a mask for every image")
{
    auto dir = scratch("unpaired");
    auto s = testing::synthetic_fundus(16, 1, "x");
    write_png(dir / "images" / "x.png", s.image);
    CHECK_THROWS_AS(load_dataset(dir), ValidationError);
    CHECK_THROWS_AS(load_dataset(dir / "missing"), IoError);
}

TEST_CASE("resize_sample follows the divisible-by-8 rule")
{
    FundusSample s;
    s.id = "drive";
    s.image = ColorImage(584, 565, 0.5);
    s.vessel_mask = BinaryMask(584, 565);
    s.vessel_mask.set(100, 100, true);
    s.fov_mask = BinaryMask(584, 565, 1);

    auto r = resize_sample(s, {584, 568});
    CHECK(r.size() == Size2{584, 568});
    CHECK(r.id == "drive");
    for (auto p : r.vessel_mask.pixels()) CHECK(p <= 1);
    CHECK(r.fov_mask.ones() == r.fov_mask.count());

    FundusSample hrf;
    hrf.image = ColorImage(2336, 3504, 0.25);
    hrf.vessel_mask = testing::random_mask(2336, 3504, 0.1, 3);
    hrf.fov_mask = BinaryMask(2336, 3504, 1);
    auto h = resize_sample(hrf, {512, 512});
    CHECK(h.size() == Size2{512, 512});
    CHECK(h.image.at(10, 10, 0) == doctest::Approx(0.25));

    try {
        resize_sample(s, {570, 584});
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("divisible by 8") != std::string::npos);
    }
}

TEST_CASE("resize keeps random masks binary")
{
    auto m = testing::random_mask(37, 53, 0.4, 11);
    auto r = resize_mask(m, {64, 48});
    CHECK(r.size() == Size2{64, 48});
    for (auto p : r.pixels()) CHECK(p <= 1);
}

TEST_CASE("green_channel picks channel index 1")
{
    ColorImage green(2, 2);
    ColorImage red(2, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            green.at(y, x, 1) = 1.0;
            red.at(y, x, 0) = 1.0;
        }
    for (double v : green_channel(green).pixels()) CHECK(v == 1.0);
    for (double v : green_channel(red).pixels()) CHECK(v == 0.0);

    ColorImage px(1, 1);
    px.at(0, 0, 0) = 0.2;
    px.at(0, 0, 1) = 0.7;
    px.at(0, 0, 2) = 0.1;
    CHECK(green_channel(px).at(0, 0) == 0.7);
}

TEST_CASE("jaccard_distance")
{
    auto a = mask_from(3, 3, {{0, 0}, {1, 1}});
    auto b = mask_from(3, 3, {{1, 1}, {2, 2}});
    auto c = mask_from(3, 3, {{0, 2}});
    CHECK(jaccard_distance(a, a) == 0.0);
    CHECK(jaccard_distance(a, c) == 1.0);
    CHECK(jaccard_distance(a, b) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(jaccard_distance(BinaryMask(3, 3), BinaryMask(3, 3)) == 0.0);
    CHECK_THROWS_AS(jaccard_distance(a, BinaryMask(2, 3)), ValidationError);
}

TEST_CASE("jaccard_distance is symmetric and zero on the diagonal")
{
    for (uint64_t i = 0; i < 500; ++i) {
        auto a = testing::random_mask(8, 8, 0.3, 2 * i);
        auto b = testing::random_mask(8, 8, 0.3, 2 * i + 1);
        REQUIRE(jaccard_distance(a, b) == jaccard_distance(b, a));
        REQUIRE(jaccard_distance(a, a) == 0.0);
        const double d = jaccard_distance(a, b);
        REQUIRE(d >= 0.0);
        REQUIRE(d <= 1.0);
    }
}
