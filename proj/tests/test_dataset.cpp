#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "apsel/dataset.hpp"
#include "apsel/rng.hpp"
#include "apsel/textio.hpp"
#include "test_util.hpp"

using namespace apsel;
using apsel_test::tmp_dir;

TEST_CASE("load_dataset parses a small csv") {
    std::string dir = tmp_dir("dataset_small");
    write_text_file(dir + "/d.csv", "id,f1,target\na,1,10\nb,2,10\nc,3,5\n");
    Dataset d = load_dataset(dir + "/d.csv", {0.0, 10.0});
    CHECK(d.size() == 3);
    CHECK(d.feature_names == std::vector<std::string>{"f1"});
    CHECK(d.instances[0].target == 10.0);
    CHECK(d.instances[2].target == 5.0);
}

TEST_CASE("load_dataset rejects out-of-bounds target naming the row") {
    std::string dir = tmp_dir("dataset_oob");
    write_text_file(dir + "/d.csv", "id,f1,target\na,1,10\nb,2,12\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir + "/d.csv", {0.0, 10.0}),
                         doctest::Contains("row 3"), std::runtime_error);
}

TEST_CASE("load_dataset rejects duplicate ids and bad cells") {
    std::string dir = tmp_dir("dataset_bad");
    write_text_file(dir + "/dup.csv", "id,f1,target\na,1,10\na,2,9\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir + "/dup.csv", {0.0, 10.0}),
                         doctest::Contains("duplicate"), std::runtime_error);
    write_text_file(dir + "/nan.csv", "id,f1,target\na,oops,10\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir + "/nan.csv", {0.0, 10.0}),
                         doctest::Contains("f1"), std::runtime_error);
}

TEST_CASE("toy fixture loads with six instances") {
    Dataset d = apsel_test::toy_dataset();
    CHECK(d.size() == 6);
    CHECK(d.instances[0].id == "dp_1");
    CHECK(d.instances[5].target == 5.0);
}

TEST_CASE("load_predictions aligns to dataset order") {
    Dataset d = apsel_test::toy_dataset();
    PredictionMatrix m = apsel_test::toy_predictions(d);
    CHECK(m.rows() == 6);
    CHECK(m.cols() == 2);
    CHECK(m.algorithm_ids == std::vector<std::string>{"a1", "a2"});
    CHECK(m.values[0][0] == 1.0);
    CHECK(m.values[0][1] == 9.0);
    CHECK(m.values[1][0] == 1.5);
    CHECK(m.values[1][1] == 8.5);
}

TEST_CASE("load_predictions reports missing and unknown ids") {
    Dataset d = apsel_test::toy_dataset();
    std::string dir = tmp_dir("preds_bad");
    write_text_file(dir + "/missing.csv",
                    "id,a1,a2\ndp_1,1,9\ndp_2,1.5,8.5\ndp_4,5.4,5.1\ndp_5,9.1,9.9\ndp_6,4.1,4.9\n");
    CHECK_THROWS_WITH_AS(load_predictions(dir + "/missing.csv", d),
                         doctest::Contains("dp_3"), std::runtime_error);
    write_text_file(dir + "/one_col.csv", "id,a1\ndp_1,1\n");
    CHECK_THROWS_WITH_AS(load_predictions(dir + "/one_col.csv", d),
                         doctest::Contains("at least 2 algorithms"), std::runtime_error);
}

TEST_CASE("split is deterministic, disjoint and exhaustive") {
    Dataset d;
    d.bounds = {0.0, 1.0};
    d.feature_names = {"f1"};
    PredictionMatrix m;
    m.algorithm_ids = {"a1", "a2"};
    for (int i = 0; i < 100; ++i) {
        d.instances.push_back({"i" + std::to_string(i), {static_cast<double>(i)}, 0.5});
        m.values.push_back({0.1, 0.2});
    }

    SplitResult s1 = split(d, m, 0.8, 0.2, 7);
    SplitResult s2 = split(d, m, 0.8, 0.2, 7);
    CHECK(s1.train_data.size() == 80);
    CHECK(s1.test_data.size() == 20);
    REQUIRE(s1.train_indices == s2.train_indices);
    REQUIRE(s1.test_indices == s2.test_indices);

    std::set<std::string> seen;
    for (const auto& ins : s1.train_data.instances) seen.insert(ins.id);
    for (const auto& ins : s1.test_data.instances) {
        CHECK(seen.count(ins.id) == 0);
        seen.insert(ins.id);
    }
    CHECK(seen.size() == 100);

    // prediction rows follow their instances
    for (std::size_t i = 0; i < s1.train_data.size(); ++i) {
        CHECK(s1.train_preds.values[i] == m.values[s1.train_indices[i]]);
    }
}

TEST_CASE("split rejects bad fractions and empty sides") {
    Dataset d;
    d.bounds = {0.0, 1.0};
    d.feature_names = {"f1"};
    PredictionMatrix m;
    m.algorithm_ids = {"a1", "a2"};
    for (int i = 0; i < 2; ++i) {
        d.instances.push_back({"i" + std::to_string(i), {0.0}, 0.5});
        m.values.push_back({0.1, 0.2});
    }
    CHECK_THROWS_AS(split(d, m, 0.5, 0.6, 1), std::invalid_argument);
    CHECK_THROWS_WITH_AS(split(d, m, 0.99, 0.01, 1), doctest::Contains("empty side"),
                         std::runtime_error);
}

TEST_CASE("generate_synthetic with zero noise reproduces targets") {
    SyntheticSpec spec;
    spec.persona_count = 1;
    spec.instances_per_persona = 50;
    spec.feature_dim = 3;
    spec.modes_per_persona = 2;
    spec.algorithm_count = 2;
    spec.error_profiles = {{0.0, 0.0}};
    spec.bounds = {0.0, 10.0};
    spec.seed = 5;
    SyntheticData out = generate_synthetic(spec);
    REQUIRE(out.dataset.size() == 50);
    for (std::size_t i = 0; i < out.dataset.size(); ++i) {
        for (double v : out.predictions.values[i]) CHECK(v == out.dataset.instances[i].target);
    }
}

TEST_CASE("generate_synthetic is bit-reproducible") {
    SyntheticSpec spec;
    spec.persona_count = 2;
    spec.instances_per_persona = 30;
    spec.feature_dim = 4;
    spec.modes_per_persona = 3;
    spec.algorithm_count = 3;
    spec.error_profiles = {{0.1, 1.0, 2.0}, {2.0, 0.1, 1.0}};
    spec.bounds = {0.0, 10.0};
    spec.seed = 42;
    SyntheticData a = generate_synthetic(spec);
    SyntheticData b = generate_synthetic(spec);
    REQUIRE(a.dataset.size() == b.dataset.size());
    for (std::size_t i = 0; i < a.dataset.size(); ++i) {
        CHECK(a.dataset.instances[i].id == b.dataset.instances[i].id);
        CHECK(a.dataset.instances[i].features == b.dataset.instances[i].features);
        CHECK(a.dataset.instances[i].target == b.dataset.instances[i].target);
        CHECK(a.predictions.values[i] == b.predictions.values[i]);
    }
    CHECK(a.persona_labels == b.persona_labels);
}

TEST_CASE("planted personas give each persona its low-noise algorithm") {
    SyntheticSpec spec;
    spec.persona_count = 2;
    spec.instances_per_persona = 600;
    spec.feature_dim = 3;
    spec.modes_per_persona = 2;
    spec.algorithm_count = 2;
    spec.error_profiles = {{0.1, 3.0}, {3.0, 0.1}};
    spec.bounds = {0.0, 10.0};
    spec.seed = 11;
    SyntheticData out = generate_synthetic(spec);

    // Oracle: per-row argmin absolute error vs the persona's low-noise column.
    std::size_t agree = 0;
    for (std::size_t i = 0; i < out.dataset.size(); ++i) {
        double y = out.dataset.instances[i].target;
        double e0 = std::fabs(y - out.predictions.values[i][0]);
        double e1 = std::fabs(y - out.predictions.values[i][1]);
        int argmin = e0 <= e1 ? 0 : 1;
        if (argmin == out.persona_labels[i]) ++agree;
    }
    double rate = static_cast<double>(agree) / static_cast<double>(out.dataset.size());
    CHECK(rate >= 0.90);
}

TEST_CASE("dataset and prediction round-trips are cell-exact") {
    Rng rng(99);
    Dataset d;
    d.bounds = {-3.0, 7.0};
    d.feature_names = {"f1", "f2"};
    PredictionMatrix m;
    m.algorithm_ids = {"a1", "a2", "a3"};
    for (int i = 0; i < 40; ++i) {
        // awkward decimals on purpose
        double t = d.bounds.lower + rng.uniform() * d.bounds.span();
        d.instances.push_back({"x" + std::to_string(i), {rng.normal() * 1e3, rng.uniform() / 3.0}, t});
        m.values.push_back({rng.normal(), rng.uniform(-1e6, 1e6), rng.uniform() * 1e-8});
    }

    std::string dir = tmp_dir("roundtrip");
    save_dataset(d, dir + "/d.csv");
    save_predictions(m, d, dir + "/p.csv");
    Dataset d2 = load_dataset(dir + "/d.csv", d.bounds);
    PredictionMatrix m2 = load_predictions(dir + "/p.csv", d2);

    REQUIRE(d2.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d2.instances[i].id == d.instances[i].id);
        CHECK(d2.instances[i].features == d.instances[i].features);
        CHECK(d2.instances[i].target == d.instances[i].target);
        CHECK(m2.values[i] == m.values[i]);
    }

    // saving the reloaded data reproduces the file byte for byte
    save_dataset(d2, dir + "/d2.csv");
    CHECK(read_text_file(dir + "/d.csv") == read_text_file(dir + "/d2.csv"));
}

TEST_CASE("synthetic spec json round-trips and validates") {
    SyntheticSpec spec;
    spec.persona_count = 3;
    spec.instances_per_persona = 10;
    spec.feature_dim = 2;
    spec.modes_per_persona = 1;
    spec.algorithm_count = 2;
    spec.error_profiles = {{0.1, 1.0}, {1.0, 0.1}, {0.5, 0.5}};
    spec.bounds = {1.0, 9.0};
    spec.seed = 123;

    std::string dir = tmp_dir("synth_spec");
    save_synthetic_spec(spec, dir + "/s.json");
    SyntheticSpec back = load_synthetic_spec(dir + "/s.json");
    CHECK(back.persona_count == 3);
    CHECK(back.error_profiles == spec.error_profiles);
    CHECK(back.seed == 123);

    write_text_file(dir + "/bad.json", "{\"persona_count\": 0}");
    CHECK_THROWS(load_synthetic_spec(dir + "/bad.json"));
    write_text_file(dir + "/unknown.json",
                    "{\"persona_count\":1,\"instances_per_persona\":1,\"feature_dim\":1,"
                    "\"modes_per_persona\":1,\"algorithm_count\":2,\"error_profiles\":[[0,0]],"
                    "\"bounds\":[0,1],\"seed\":1,\"extra\":true}");
    CHECK_THROWS_WITH_AS(load_synthetic_spec(dir + "/unknown.json"),
                         doctest::Contains("unknown key"), std::runtime_error);
}
