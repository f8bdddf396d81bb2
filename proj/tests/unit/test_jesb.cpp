#include <doctest.h>

#include <limits>
#include <set>

#include "deffa/errors.hpp"
#include "deffa/jesb.hpp"
#include "synthetic.hpp"

using namespace deffa;

namespace {

BinaryMask half_mask(int size, bool left, int jitter = 0)
{
    BinaryMask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size / 2; ++x) m.set(y, left ? x : size - 1 - x, true);
    if (jitter > 0) m.set(jitter % size, size / 2, true);
    return m;
}

FundusSample sample_with_mask(const std::string& id, const BinaryMask& mask, uint64_t seed)
{
    auto s = testing::synthetic_fundus(mask.height(), seed, id);
    s.vessel_mask = mask;
    return s;
}

std::vector<FundusSample> two_block_dataset(int left, int right)
{
    std::vector<FundusSample> out;
    for (int i = 0; i < left; ++i) out.push_back(sample_with_mask("L" + std::to_string(i), half_mask(16, true), i));
    for (int i = 0; i < right; ++i)
        out.push_back(sample_with_mask("R" + std::to_string(i), half_mask(16, false), 100 + i));
    return out;
}

DistanceMatrix matrix(std::vector<std::vector<double>> rows)
{
    std::vector<double> e;
    std::vector<std::string> ids;
    for (size_t i = 0; i < rows.size(); ++i) {
        ids.push_back("s" + std::to_string(i));
        e.insert(e.end(), rows[i].begin(), rows[i].end());
    }
    return DistanceMatrix(ids, e);
}

// Per-sample silhouette straight from the definition.
double silhouette_oracle(const DistanceMatrix& d, const std::vector<int>& labels)
{
    const size_t n = d.size();
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        std::map<int, std::pair<double, int>> per;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            per[labels[j]].first += d.at(i, j);
            per[labels[j]].second += 1;
        }
        if (per.count(labels[i]) == 0) continue;  // singleton
        const double a = per[labels[i]].first / per[labels[i]].second;
        double b = std::numeric_limits<double>::infinity();
        for (auto& [l, v] : per)
            if (l != labels[i]) b = std::min(b, v.first / v.second);
        const double m = std::max(a, b);
        total += m > 0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

double medoid_cost(const DistanceMatrix& d, const std::vector<size_t>& medoids)
{
    double cost = 0.0;
    for (size_t i = 0; i < d.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t m : medoids) best = std::min(best, d.at(i, m));
        cost += best;
    }
    return cost;
}

}  // namespace

TEST_CASE("pairwise_distance")
{
    auto a = half_mask(8, true);
    auto b = half_mask(8, false);
    std::vector<BinaryMask> same{a, a};
    auto d = pairwise_distance(same);
    CHECK(d.at(0, 1) == 0.0);
    CHECK(d.at(1, 0) == 0.0);

    std::vector<BinaryMask> disjoint{a, b};
    d = pairwise_distance(disjoint);
    CHECK(d.at(0, 1) == 1.0);
    CHECK(d.at(0, 0) == 0.0);

    std::vector<BinaryMask> random;
    for (uint64_t i = 0; i < 3; ++i) random.push_back(testing::random_mask(8, 8, 0.4, i + 10));
    d = pairwise_distance(random);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 3; ++j) CHECK(d.at(i, j) == jaccard_distance(random[i], random[j]));

    std::vector<BinaryMask> mixed{a, BinaryMask(4, 4)};
    CHECK_THROWS_AS(pairwise_distance(mixed), ValidationError);
    std::vector<BinaryMask> one{a};
    CHECK_THROWS_AS(pairwise_distance(one), ValidationError);
}

TEST_CASE("silhouette_score")
{
    auto blocks = matrix({{0, 0, 1, 1}, {0, 0, 1, 1}, {1, 1, 0, 0}, {1, 1, 0, 0}});
    std::vector<int> split{0, 0, 1, 1};
    CHECK(silhouette_score(blocks, split) == doctest::Approx(1.0));

    auto equidistant = matrix({{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 1}, {1, 1, 1, 0}});
    CHECK(silhouette_score(equidistant, split) == doctest::Approx(0.0));

    auto five = matrix({{0.0, 0.2, 0.7, 0.9, 0.6},
                        {0.2, 0.0, 0.5, 0.8, 0.4},
                        {0.7, 0.5, 0.0, 0.3, 0.35},
                        {0.9, 0.8, 0.3, 0.0, 0.25},
                        {0.6, 0.4, 0.35, 0.25, 0.0}});
    for (auto labels : {std::vector<int>{0, 0, 1, 1, 1}, std::vector<int>{0, 0, 1, 1, 2},
                        std::vector<int>{0, 1, 0, 1, 0}}) {
        CHECK(std::abs(silhouette_score(five, labels) - silhouette_oracle(five, labels)) < 1e-12);
    }

    std::vector<int> single{0, 0, 0, 0};
    CHECK_THROWS_AS(silhouette_score(blocks, single), ValidationError);
}

TEST_CASE("cluster_medoids")
{
    auto blocks = matrix({{0, 0, 0, 1, 1}, {0, 0, 0, 1, 1}, {0, 0, 0, 1, 1}, {1, 1, 1, 0, 0}, {1, 1, 1, 0, 0}});
    auto c = cluster_medoids(blocks, 2, 3);
    CHECK(c.labels == std::vector<int>{0, 0, 0, 1, 1});
    CHECK(c.cost == 0.0);
    CHECK(cluster_medoids(blocks, 2, 3).labels == c.labels);
    CHECK_THROWS_AS(cluster_medoids(blocks, 1, 0), ValidationError);
    CHECK_THROWS_AS(cluster_medoids(blocks, 5, 0), ValidationError);
}

TEST_CASE("cluster_medoids reaches the exhaustive best medoid pair on 8-sample instances")
{
    for (uint64_t trial = 0; trial < 25; ++trial) {
        std::vector<BinaryMask> masks;
        for (uint64_t i = 0; i < 8; ++i) masks.push_back(testing::random_mask(6, 6, 0.2 + 0.05 * (i % 4), trial * 50 + i));
        auto d = pairwise_distance(masks);
        double best = std::numeric_limits<double>::infinity();
        for (size_t a = 0; a < 8; ++a)
            for (size_t b = a + 1; b < 8; ++b) best = std::min(best, medoid_cost(d, {a, b}));
        for (uint64_t seed : {0u, 1u, 7u}) {
            auto c = cluster_medoids(d, 2, seed);
            CHECK(c.cost <= best + 1e-9);
            CHECK(medoid_cost(d, c.medoids) == doctest::Approx(c.cost));
        }
    }
}

TEST_CASE("select_k")
{
    std::vector<BinaryMask> masks;
    for (int i = 0; i < 6; ++i) masks.push_back(half_mask(16, true));
    for (int i = 0; i < 2; ++i) masks.push_back(half_mask(16, false));
    auto model = select_k(pairwise_distance(masks), 7);
    CHECK(model.k_star == 2);
    CHECK(model.silhouette_by_k.size() == 6);
    CHECK(model.silhouette_by_k.at(2) == doctest::Approx(1.0));
    CHECK(model.target_size == 6);
    CHECK(model.deficits == std::vector<size_t>{0, 4});

    std::vector<BinaryMask> same(5, half_mask(8, true));
    auto flat = select_k(pairwise_distance(same), 4);
    CHECK(flat.k_star == 2);
    CHECK(flat.best_silhouette() == 0.0);

    CHECK_THROWS_AS(select_k(pairwise_distance(masks), 1), ValidationError);
    std::vector<BinaryMask> three(3, half_mask(8, true));
    CHECK(select_k(pairwise_distance(three), 2).skipped);
}

TEST_CASE("synthesize_variant is photometric only")
{
    auto s = testing::synthetic_fundus(32, 5, "src");
    auto v = synthesize_variant(s, 9);
    CHECK(v.vessel_mask == s.vessel_mask);
    CHECK(v.fov_mask == s.fov_mask);
    CHECK(v.synthetic);
    CHECK(v.id != s.id);
    CHECK(v.image != s.image);
    CHECK(synthesize_variant(s, 9).image == v.image);
    for (uint64_t seed = 0; seed < 100; ++seed) {
        auto out = synthesize_variant(s, seed);
        for (double p : out.image.data()) REQUIRE((p >= 0.0 && p <= 1.0));
    }
}

TEST_CASE("balance_dataset tops minority clusters up to the majority size")
{
    auto data = two_block_dataset(6, 2);
    auto result = balance_dataset(data, 7, 11);
    CHECK(result.model.k_star == 2);
    CHECK(result.synthetic_count == 4);
    REQUIRE(result.samples.size() == 12);
    for (size_t i = 0; i < data.size(); ++i) CHECK(result.samples[i].id == data[i].id);

    int left = 0, right = 0;
    for (const auto& s : result.samples) {
        if (s.vessel_mask == half_mask(16, true)) ++left;
        else if (s.vessel_mask == half_mask(16, false)) ++right;
    }
    CHECK(left == 6);
    CHECK(right == 6);
    for (size_t i = data.size(); i < result.samples.size(); ++i) {
        const auto& syn = result.samples[i];
        CHECK(syn.synthetic);
        CHECK(syn.vessel_mask == half_mask(16, false));
        CHECK(syn.id.rfind("R", 0) == 0);
    }

    auto again = balance_dataset(data, 7, 11);
    REQUIRE(again.samples.size() == result.samples.size());
    for (size_t i = 0; i < again.samples.size(); ++i) {
        CHECK(again.samples[i].id == result.samples[i].id);
        CHECK(again.samples[i].image == result.samples[i].image);
    }
}

TEST_CASE("balance_dataset edge cases")
{
    SUBCASE("equal clusters need no synthetics")
    {
        auto data = two_block_dataset(4, 4);
        auto r = balance_dataset(data, 7, 0);
        CHECK(r.synthetic_count == 0);
        CHECK(r.samples.size() == data.size());
    }
    SUBCASE("identical masks are a no-op")
    {
        auto data = two_block_dataset(6, 0);
        auto r = balance_dataset(data, 5, 0);
        CHECK(r.model.k_star == 2);
        CHECK(r.synthetic_count == 0);
        CHECK(r.samples.size() == 6);
    }
    SUBCASE("fewer than four samples are returned unchanged")
    {
        auto data = two_block_dataset(2, 1);
        auto r = balance_dataset(data, 2, 0);
        CHECK(r.model.skipped);
        CHECK(r.samples.size() == 3);
    }
    SUBCASE("33 / 7 split needs 26 synthetics")
    {
        std::vector<FundusSample> data;
        auto base = testing::synthetic_fundus(8, 1, "base");
        for (int i = 0; i < 40; ++i) {
            FundusSample s = base;
            s.id = "d" + std::to_string(i);
            s.vessel_mask = half_mask(8, i < 33);
            data.push_back(s);
        }
        auto r = balance_dataset(data, default_k_max(data.size()), 4);
        CHECK(r.model.k_star == 2);
        CHECK(r.synthetic_count == 26);
        CHECK(r.samples.size() == 66);
    }
    CHECK(default_k_max(40) == 10);
    CHECK(default_k_max(5) == 4);
}
