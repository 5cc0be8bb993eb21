#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "apsel/perfspace.hpp"
#include "apsel/rng.hpp"
#include "test_util.hpp"

using namespace apsel;

TEST_CASE("absolute error matches the worked example") {
    CHECK(absolute_error(10, 1.0) == 9.0);
    CHECK(absolute_error(10, 9.0) == 1.0);
    CHECK(absolute_error(5, 5) == 0.0);
}

TEST_CASE("rank_row ranks ascending errors with minimum-rank ties") {
    CHECK(rank_row({9.0, 1.0}) == std::vector<int>{2, 1});
    CHECK(rank_row({4.5, 5.0}) == std::vector<int>{1, 2});
    CHECK(rank_row({3, 3, 7}) == std::vector<int>{1, 1, 3});
}

TEST_CASE("rank_row of distinct errors is a permutation of 1..m") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t m = 2 + rng.index(6);
        std::vector<double> errors(m);
        for (double& e : errors) e = rng.uniform(0.0, 100.0);
        std::vector<int> ranks = rank_row(errors);
        std::vector<int> sorted = ranks;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < m; ++i) CHECK(sorted[i] == static_cast<int>(i) + 1);
    }
}

TEST_CASE("three algorithms admit exactly six untied rank vectors") {
    std::vector<double> base = {1.0, 2.0, 3.0};
    std::sort(base.begin(), base.end());
    std::set<std::vector<int>> distinct;
    do {
        distinct.insert(rank_row(base));
    } while (std::next_permutation(base.begin(), base.end()));
    CHECK(distinct.size() == 6);
}

TEST_CASE("max_possible_error uses the actual target") {
    CHECK(max_possible_error(4, {1.0, 10.0}) == 6.0);
    CHECK(max_possible_error(9, {1.0, 10.0}) == 8.0);
    CHECK(max_possible_error(5, {0.0, 10.0}) == 5.0);
    CHECK_THROWS_AS(max_possible_error(12, {0.0, 10.0}), std::invalid_argument);
}

TEST_CASE("relative error reproduces the dp_1/dp_2 percentages") {
    TargetBounds b{0.0, 10.0};
    CHECK(relative_error(10, 1.0, b) == doctest::Approx(0.90).epsilon(1e-12));
    CHECK(relative_error(10, 9.0, b) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(relative_error(10, 8.5, b) == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("riip_row matches the worked ratios and zero conventions") {
    std::vector<double> r1 = riip_row({8.5, 1.5});
    CHECK(r1[0] == doctest::Approx(1.5 / 8.5).epsilon(1e-12)); // "18% as good"
    CHECK(r1[1] == 1.0);

    std::vector<double> r2 = riip_row({9.0, 1.0});
    CHECK(r2[0] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(r2[1] == 1.0);

    CHECK(riip_row({0.0, 2.0}) == std::vector<double>{1.0, 0.0});
    CHECK(riip_row({0.0, 0.0}) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("riip_row is scale invariant and always contains a 1") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t m = 2 + rng.index(6);
        std::vector<double> errors(m);
        for (double& e : errors) e = rng.uniform(1e-6, 50.0);
        std::vector<double> base = riip_row(errors);
        CHECK(*std::max_element(base.begin(), base.end()) == 1.0);

        double c = rng.uniform(0.1, 10.0);
        std::vector<double> scaled = errors;
        for (double& e : scaled) e *= c;
        std::vector<double> r = riip_row(scaled);
        for (std::size_t k = 0; k < m; ++k) {
            CHECK(r[k] == doctest::Approx(base[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("riip_mpre_row hand evaluations") {
    TargetBounds b{0.0, 10.0};
    std::vector<double> r = riip_mpre_row(10, {1.0, 9.0}, b);
    CHECK(r[0] == doctest::Approx(0.10 * (1.0 / 9.0)).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(0.90).epsilon(1e-12));

    CHECK(riip_mpre_row(10, {10, 10}, b) == std::vector<double>{1.0, 1.0});

    std::vector<double> r2 = riip_mpre_row(10, {9.1, 9.9}, b);
    CHECK(r2[0] == doctest::Approx(0.91 * (0.1 / 0.9)).epsilon(1e-9));
    CHECK(r2[1] == doctest::Approx(0.99).epsilon(1e-12));
}

TEST_CASE("build_space on the toy fixture") {
    Dataset d = apsel_test::toy_dataset();
    PredictionMatrix m = apsel_test::toy_predictions(d);

    PerformanceSpace err = build_space(d, m, PerfMetric::absolute_error);
    CHECK(err.values[3][0] == doctest::Approx(4.6).epsilon(1e-12));
    CHECK(err.values[3][1] == doctest::Approx(4.9).epsilon(1e-12));
    CHECK(err.best_algorithm[3] == 0);

    PerformanceSpace riip = build_space(d, m, PerfMetric::riip_mpre);
    CHECK(riip.best_algorithm[0] == 1);
    for (std::size_t i = 0; i < riip.size(); ++i) {
        for (double v : riip.values[i]) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }

    PerformanceSpace rank = build_space(d, m, PerfMetric::rank);
    CHECK(rank.values[0] == std::vector<double>{2.0, 1.0});
}

TEST_CASE("build_space handles a single instance") {
    Dataset d;
    d.bounds = {0.0, 10.0};
    d.feature_names = {"f1"};
    d.instances.push_back({"only", {1.0}, 5.0});
    PredictionMatrix m;
    m.algorithm_ids = {"a1", "a2", "a3"};
    m.values = {{4.0, 5.0, 6.0}};
    PerformanceSpace s = build_space(d, m, PerfMetric::riip_mpre);
    CHECK(s.size() == 1);
    CHECK(s.algo_count() == 3);
}

TEST_CASE("distance kinds") {
    std::vector<double> u = {9.0, 1.0};
    std::vector<double> v = {0.9, 0.1};
    CHECK(distance(u, v, DistanceKind::cosine) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> w = {8.5, 1.5};
    CHECK(distance(u, w, DistanceKind::euclidean) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

    CHECK(distance(u, u, DistanceKind::euclidean) == 0.0);
    CHECK(distance(u, u, DistanceKind::cosine) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> zero = {0.0, 0.0};
    CHECK_THROWS_AS(distance(u, zero, DistanceKind::cosine), std::invalid_argument);
    std::vector<double> shorter = {1.0};
    CHECK_THROWS_AS(distance(u, shorter, DistanceKind::euclidean), std::invalid_argument);
}

TEST_CASE("dispersion normalization") {
    PerformanceSpace s;
    s.metric = PerfMetric::absolute_error;
    s.algorithm_ids = {"a1", "a2"};
    s.instance_ids = {"x", "y", "z"};
    s.values = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
    s.best_algorithm = {0, 0, 0};
    CHECK(dispersion(s, 100, 1) == 0.0);

    PerformanceSpace two;
    two.metric = PerfMetric::absolute_error;
    two.algorithm_ids = {"a1", "a2"};
    two.instance_ids = {"x", "y"};
    two.values = {{0.0, 0.0}, {3.0, 4.0}};
    two.best_algorithm = {0, 0};
    CHECK(dispersion(two, 50, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

// Order preservation: descending riip-mpre equals ascending absolute error
// for strictly positive in-bounds errors.
TEST_CASE("riip_mpre ordering agrees with error ordering") {
    Rng rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        double lo = rng.uniform(-10.0, 10.0);
        double hi = lo + rng.uniform(0.5, 20.0);
        TargetBounds b{lo, hi};
        double y = rng.uniform(lo, hi);
        std::size_t m = 2 + rng.index(7);
        std::vector<double> yhats(m);
        for (double& v : yhats) {
            do {
                v = rng.uniform(lo, hi);
            } while (std::fabs(v - y) < 1e-9);
        }
        std::vector<double> p = riip_mpre_row(y, yhats, b);
        std::vector<double> e(m);
        for (std::size_t k = 0; k < m; ++k) e[k] = std::fabs(y - yhats[k]);

        std::vector<std::size_t> by_err(m), by_p(m);
        std::iota(by_err.begin(), by_err.end(), 0);
        by_p = by_err;
        std::sort(by_err.begin(), by_err.end(), [&](std::size_t a, std::size_t c) { return e[a] < e[c]; });
        std::sort(by_p.begin(), by_p.end(), [&](std::size_t a, std::size_t c) { return p[a] > p[c]; });
        REQUIRE(by_err == by_p);

        for (double v : p) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}
