#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "apsel/selector.hpp"
#include "apsel/personas.hpp"
#include "apsel/rng.hpp"
#include "apsel/textio.hpp"
#include "test_util.hpp"

using namespace apsel;
using apsel_test::tmp_dir;

namespace {

// 2-d identity embedding lets tests place references exactly.
EmbeddingModel identity2() {
    EmbeddingModel m;
    m.layer_sizes = {2, 2};
    m.weights = {{1.0, 0.0, 0.0, 1.0}};
    m.biases = {{0.0, 0.0}};
    m.activation = Activation::relu;
    m.normalize_output = false;
    return m;
}

Dataset labelled(const std::vector<std::vector<double>>& feats, const std::vector<double>& targets) {
    Dataset d;
    d.bounds = {0.0, 10.0};
    d.feature_names = {"f1", "f2"};
    for (std::size_t i = 0; i < feats.size(); ++i) {
        d.instances.push_back({"r" + std::to_string(i), feats[i], targets[i]});
    }
    return d;
}

} // namespace

TEST_CASE("fit_selector stores aligned references and the single-best fallback") {
    EmbeddingModel m = init_model({3, 8, 16}, Activation::relu, true, 6);
    Dataset d;
    d.bounds = {0.0, 10.0};
    d.feature_names = {"f1", "f2", "f3"};
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2"};
    Rng rng(14);
    for (int i = 0; i < 100; ++i) {
        d.instances.push_back({"r" + std::to_string(i),
                               {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                               rng.uniform(0.0, 10.0)});
        // a2 is consistently closer to the target
        double y = d.instances.back().target;
        preds.values.push_back({d.bounds.clamp(y + 3.0), d.bounds.clamp(y + 0.5)});
    }

    SelectorModel s = fit_selector(m, d, preds, 5, 0.2, DistanceKind::euclidean);
    CHECK(s.reference_embeddings.size() == 100);
    CHECK(s.reference_embeddings[0].size() == 16);
    CHECK(s.fallback == 1);
    CHECK(s.reference_perf.metric == PerfMetric::riip_mpre);

    SelectorModel s2 = fit_selector(m, d, preds, 5, 0.2, DistanceKind::euclidean);
    CHECK(s2.reference_embeddings == s.reference_embeddings);
    CHECK(s2.reference_best == s.reference_best);
}

TEST_CASE("select aggregates the mean riip-mpre over in-margin neighbors") {
    Dataset d = labelled({{0.0, 0.0}, {0.1, 0.0}, {0.0, 0.1}, {5.0, 5.0}}, {10, 10, 10, 10});
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2"};
    // rows 0/1: a2 wins clearly; row 2: a1 wins slightly; row 3: far away
    preds.values = {{1.0, 9.0}, {1.5, 8.5}, {5.5, 5.0}, {9.0, 1.0}};

    SelectorModel s = fit_selector(identity2(), d, preds, 3, 1.0, DistanceKind::euclidean);
    SelectionOutcome out = select(s, {0.02, 0.02});
    CHECK(!out.used_fallback);
    CHECK(out.neighbors_used.size() == 3);
    for (const auto& [id, dist] : out.neighbors_used) CHECK(dist < 1.0);
    CHECK(out.chosen == 1); // mean riip-mpre favors a2
}

TEST_CASE("select falls back to the single best when nothing is in range") {
    Dataset d = labelled({{0.0, 0.0}, {0.5, 0.5}}, {10, 10});
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2"};
    preds.values = {{2.0, 9.0}, {3.0, 8.0}}; // a2 predicts near the target
    SelectorModel s = fit_selector(identity2(), d, preds, 3, 0.25, DistanceKind::euclidean);
    SelectionOutcome out = select(s, {50.0, 50.0});
    CHECK(out.used_fallback);
    CHECK(out.neighbors_used.empty());
    CHECK(out.chosen == 1); // a2 has the lower mean error
}

TEST_CASE("neighbors respect alpha and k") {
    std::vector<std::vector<double>> feats;
    std::vector<double> targets;
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        feats.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
        targets.push_back(10.0);
    }
    Dataset d = labelled(feats, targets);
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2"};
    for (int i = 0; i < 50; ++i) preds.values.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});

    SelectorModel s = fit_selector(identity2(), d, preds, 4, 0.6, DistanceKind::euclidean);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> q = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
        SelectionOutcome out = select(s, q);
        CHECK(out.neighbors_used.size() <= 4);
        for (const auto& [id, dist] : out.neighbors_used) CHECK(dist < 0.6);
        CHECK(out.used_fallback == out.neighbors_used.empty());
    }
}

TEST_CASE("reference order does not change the selection") {
    Rng rng(13);
    std::vector<std::vector<double>> feats;
    std::vector<double> targets;
    for (int i = 0; i < 30; ++i) {
        feats.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
        targets.push_back(10.0);
    }
    Dataset d = labelled(feats, targets);
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2", "a3"};
    for (int i = 0; i < 30; ++i) {
        preds.values.push_back({rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)});
    }
    SelectorModel s = fit_selector(identity2(), d, preds, 5, 0.8, DistanceKind::euclidean);

    // reverse the dataset and refit
    Dataset rd = d;
    std::reverse(rd.instances.begin(), rd.instances.end());
    PredictionMatrix rpreds = preds;
    std::reverse(rpreds.values.begin(), rpreds.values.end());
    SelectorModel rs = fit_selector(identity2(), rd, rpreds, 5, 0.8, DistanceKind::euclidean);

    for (int t = 0; t < 100; ++t) {
        std::vector<double> q = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
        CHECK(select(s, q).chosen == select(rs, q).chosen);
    }
}

TEST_CASE("unanimous references always win") {
    std::vector<std::vector<double>> feats;
    std::vector<double> targets;
    Rng rng(15);
    for (int i = 0; i < 20; ++i) {
        feats.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
        targets.push_back(10.0);
    }
    Dataset d = labelled(feats, targets);
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2"};
    for (int i = 0; i < 20; ++i) {
        preds.values.push_back({rng.uniform(8.0, 10.0), rng.uniform(0.0, 4.0)}); // a1 always best
    }
    for (Aggregation agg : {Aggregation::mean_perf, Aggregation::majority_vote}) {
        SelectorModel s = fit_selector(identity2(), d, preds, 5, 0.7, DistanceKind::euclidean, agg);
        REQUIRE(s.fallback == 0);
        for (int t = 0; t < 60; ++t) {
            std::vector<double> q = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
            CHECK(select(s, q).chosen == 0);
        }
    }
}

TEST_CASE("select_batch is elementwise select") {
    Dataset d = labelled({{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}}, {10, 10, 10});
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2"};
    preds.values = {{1.0, 9.0}, {9.0, 1.0}, {5.0, 5.0}};
    SelectorModel s = fit_selector(identity2(), d, preds, 2, 0.75, DistanceKind::euclidean);

    Dataset empty;
    empty.bounds = d.bounds;
    empty.feature_names = d.feature_names;
    CHECK(select_batch(s, empty).empty());

    Dataset one;
    one.bounds = d.bounds;
    one.feature_names = d.feature_names;
    one.instances.push_back({"q", {0.1, 0.1}, 5.0});
    std::vector<SelectionOutcome> batch = select_batch(s, one);
    REQUIRE(batch.size() == 1);
    SelectionOutcome single = select(s, {0.1, 0.1});
    CHECK(batch[0].chosen == single.chosen);
    CHECK(batch[0].neighbors_used == single.neighbors_used);
}

TEST_CASE("toy fixture end to end: query lands with the a2 personas") {
    Dataset d = apsel_test::toy_dataset();
    PredictionMatrix preds = apsel_test::toy_predictions(d);
    PerformanceSpace space = build_space(d, preds, PerfMetric::riip_mpre);

    MiningConfig mcfg;
    mcfg.pos_radius = 0.06;
    mcfg.neg_radius = 0.30;
    mcfg.triplets_per_anchor = 4;
    mcfg.seed = 2;
    std::vector<Triplet> trips = mine_triplets_radius(space, d, mcfg);
    REQUIRE(!trips.empty());

    TrainConfig tcfg;
    tcfg.epochs = 200;
    tcfg.margin = 0.2;
    tcfg.seed = 3;
    EmbeddingModel init = init_model({3, 16, 8}, Activation::relu, true, 4);
    auto [model, report] = train(init, trips, d, tcfg);

    SelectorModel s = fit_selector(model, d, preds, 5, 0.5, DistanceKind::euclidean);
    SelectionOutcome out = select(s, {1.0, 45.0, 105.0}); // dp_p1
    CHECK(!out.used_fallback);
    CHECK(s.reference_perf.algorithm_ids[static_cast<std::size_t>(out.chosen)] == "a2");
}

TEST_CASE("selector json round-trips and reproduces selections") {
    Dataset d = labelled({{0.0, 0.0}, {0.3, 0.3}, {2.0, 2.0}}, {10, 10, 10});
    PredictionMatrix preds;
    preds.algorithm_ids = {"a1", "a2"};
    preds.values = {{1.0, 9.0}, {2.0, 8.0}, {9.0, 1.0}};
    EmbeddingModel m = init_model({2, 6, 4}, Activation::relu, true, 8);
    SelectorModel s = fit_selector(m, d, preds, 3, 0.4, DistanceKind::euclidean);

    std::string dir = tmp_dir("selector_io");
    s.save(dir + "/s.json");
    SelectorModel back = SelectorModel::load(dir + "/s.json");
    CHECK(back.reference_ids == s.reference_ids);
    CHECK(back.fallback == s.fallback);

    Rng rng(3);
    for (int t = 0; t < 40; ++t) {
        std::vector<double> q = {rng.uniform(-1.0, 3.0), rng.uniform(-1.0, 3.0)};
        SelectionOutcome a = select(s, q);
        SelectionOutcome b = select(back, q);
        CHECK(a.chosen == b.chosen);
        CHECK(a.used_fallback == b.used_fallback);
    }
}

TEST_CASE("save_selections writes ids and flags") {
    Dataset d = labelled({{0.0, 0.0}}, {10});
    std::vector<SelectionOutcome> outs(1);
    outs[0].chosen = 1;
    outs[0].used_fallback = true;
    std::string dir = tmp_dir("selections_io");
    save_selections(outs, d, {"a1", "a2"}, dir + "/sel.csv");
    std::string text = read_text_file(dir + "/sel.csv");
    CHECK(text == "id,chosen,used_fallback,n_neighbors\nr0,a2,1,0\n");
}
