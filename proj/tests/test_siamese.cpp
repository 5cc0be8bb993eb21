#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "apsel/siamese.hpp"
#include "apsel/rng.hpp"
#include "apsel/textio.hpp"
#include "test_util.hpp"

using namespace apsel;
using apsel_test::tmp_dir;

namespace {

Dataset feature_table(const std::vector<std::vector<double>>& feats) {
    Dataset d;
    d.bounds = {0.0, 10.0};
    for (std::size_t j = 0; j < feats[0].size(); ++j) d.feature_names.push_back("f" + std::to_string(j + 1));
    for (std::size_t i = 0; i < feats.size(); ++i) {
        d.instances.push_back({"x" + std::to_string(i), feats[i], 5.0});
    }
    return d;
}

} // namespace

TEST_CASE("init_model is seed-deterministic and respects the glorot bound") {
    EmbeddingModel a = init_model({8, 16, 4}, Activation::relu, true, 1);
    EmbeddingModel b = init_model({8, 16, 4}, Activation::relu, true, 1);
    CHECK(a.weights == b.weights);
    CHECK(a.biases == b.biases);
    CHECK(a.checksum() == b.checksum());

    EmbeddingModel c = init_model({3, 2}, Activation::relu, false, 0);
    double bound = std::sqrt(6.0 / 5.0);
    for (double w : c.weights[0]) {
        CHECK(std::fabs(w) <= bound);
    }
    for (double v : c.biases[0]) CHECK(v == 0.0);

    CHECK_THROWS_AS(init_model({8}, Activation::relu, true, 1), std::invalid_argument);
}

TEST_CASE("embed edge cases") {
    // all-zero weights, relu, no normalization -> zero vector
    EmbeddingModel zero;
    zero.layer_sizes = {3, 4, 2};
    zero.weights = {std::vector<double>(12, 0.0), std::vector<double>(8, 0.0)};
    zero.biases = {std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)};
    zero.activation = Activation::relu;
    zero.normalize_output = false;
    CHECK(embed(zero, {1.0, -2.0, 3.0}) == std::vector<double>{0.0, 0.0});

    // identity single layer
    EmbeddingModel ident;
    ident.layer_sizes = {2, 2};
    ident.weights = {{1.0, 0.0, 0.0, 1.0}};
    ident.biases = {{0.0, 0.0}};
    ident.normalize_output = false;
    CHECK(embed(ident, {0.25, -4.0}) == std::vector<double>{0.25, -4.0});

    CHECK_THROWS_AS(embed(ident, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("normalized embeddings live on the unit sphere") {
    EmbeddingModel m = init_model({5, 12, 6}, Activation::tanh, true, 3);
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(5);
        for (double& v : x) v = rng.uniform(-10.0, 10.0);
        std::vector<double> e = embed(m, x);
        double norm = 0.0;
        for (double v : e) norm += v * v;
        CHECK(std::fabs(std::sqrt(norm) - 1.0) <= 1e-9);
    }
}

TEST_CASE("triplet loss formula") {
    std::vector<double> a = {0.0, 0.0};
    CHECK(triplet_loss(a, {0.2, 0.0}, {1.0, 0.0}, 0.5, DistanceKind::euclidean) == 0.0);
    CHECK(triplet_loss(a, {0.8, 0.0}, {0.9, 0.0}, 0.5, DistanceKind::euclidean) ==
          doctest::Approx(0.4).epsilon(1e-12));
    CHECK(triplet_loss(a, a, a, 0.3, DistanceKind::euclidean) == doctest::Approx(0.3));
}

TEST_CASE("contrastive loss formula") {
    std::vector<double> u = {0.0, 0.0};
    CHECK(contrastive_loss(u, u, true, 0.5, DistanceKind::euclidean) == 0.0);
    CHECK(contrastive_loss(u, {0.7, 0.0}, false, 0.5, DistanceKind::euclidean) == 0.0);
    CHECK(contrastive_loss(u, {0.3, 0.0}, false, 0.5, DistanceKind::euclidean) ==
          doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(71);
    int done = 0;
    int attempts = 0;
    while (done < 20 && attempts < 400) {
        ++attempts;
        TrainConfig cfg;
        cfg.margin = 0.4;
        cfg.distance_kind = rng.uniform() < 0.5 ? DistanceKind::euclidean : DistanceKind::cosine;
        EmbeddingModel m = init_model({4, 8, 3}, rng.uniform() < 0.5 ? Activation::relu : Activation::tanh,
                                      rng.uniform() < 0.5, rng.next_u64());
        std::vector<double> a(4), p(4), n(4);
        for (double& v : a) v = rng.uniform(-1.0, 1.0);
        for (double& v : p) v = rng.uniform(-1.0, 1.0);
        for (double& v : n) v = rng.uniform(-1.0, 1.0);
        try {
            double rel = grad_check(m, a, p, n, cfg);
            CHECK(rel < 1e-4);
            ++done;
        } catch (const std::runtime_error&) {
            // ill-conditioned draw, resample
        }
    }
    CHECK(done == 20);
}

TEST_CASE("grad_check rejects an inactive hinge") {
    TrainConfig cfg;
    cfg.margin = 0.1;
    EmbeddingModel ident;
    ident.layer_sizes = {2, 2};
    ident.weights = {{1.0, 0.0, 0.0, 1.0}};
    ident.biases = {{0.0, 0.0}};
    ident.normalize_output = false;
    // positive next to the anchor, negative far away: loss is zero
    CHECK_THROWS_WITH_AS(grad_check(ident, {0.0, 0.0}, {0.05, 0.0}, {5.0, 0.0}, cfg),
                         doctest::Contains("inactive hinge"), std::runtime_error);
}

TEST_CASE("contrastive gradients also pass the finite-difference check") {
    Rng rng(73);
    int done = 0;
    int attempts = 0;
    while (done < 8 && attempts < 200) {
        ++attempts;
        TrainConfig cfg;
        cfg.margin = 0.6;
        cfg.loss = LossKind::contrastive;
        EmbeddingModel m = init_model({3, 6, 2}, Activation::tanh, false, rng.next_u64());
        std::vector<double> a(3), p(3), n(3);
        for (double& v : a) v = rng.uniform(-1.0, 1.0);
        for (double& v : p) v = rng.uniform(-1.0, 1.0);
        for (double& v : n) v = rng.uniform(-1.0, 1.0);
        try {
            double rel = grad_check(m, a, p, n, cfg);
            CHECK(rel < 1e-4);
            ++done;
        } catch (const std::runtime_error&) {
        }
    }
    CHECK(done == 8);
}

TEST_CASE("training with zero learning rate leaves the model unchanged") {
    Dataset d = feature_table({{0.0, 0.0}, {0.1, 0.1}, {5.0, 5.0}});
    std::vector<Triplet> trips = {{"x0", "x1", "x2", Difficulty::semi_hard}};
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 4;
    cfg.optimizer = OptimizerKind::sgd;
    EmbeddingModel m = init_model({2, 4, 2}, Activation::relu, true, 9);
    std::string before = m.checksum();
    auto [trained, report] = train(m, trips, d, cfg);
    CHECK(trained.checksum() == before);
    for (std::size_t i = 1; i < report.epoch_loss.size(); ++i) {
        CHECK(report.epoch_loss[i] == report.epoch_loss[0]);
    }
    CHECK(report.final_checksum == before);
}

TEST_CASE("training is deterministic per seed") {
    SyntheticSpec spec;
    spec.persona_count = 2;
    spec.instances_per_persona = 40;
    spec.feature_dim = 3;
    spec.modes_per_persona = 2;
    spec.algorithm_count = 2;
    spec.error_profiles = {{0.1, 2.0}, {2.0, 0.1}};
    spec.bounds = {0.0, 10.0};
    spec.seed = 21;
    SyntheticData gen = generate_synthetic(spec);
    PerformanceSpace space = build_space(gen.dataset, gen.predictions, PerfMetric::riip_mpre);
    MiningConfig mcfg = MiningConfig::defaults_for(space);
    mcfg.seed = 2;
    std::vector<Triplet> trips = mine_triplets_radius(space, gen.dataset, mcfg);

    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 31;
    EmbeddingModel init = init_model({3, 8, 4}, Activation::relu, true, 12);
    auto [m1, r1] = train(init, trips, gen.dataset, cfg);
    auto [m2, r2] = train(init, trips, gen.dataset, cfg);
    CHECK(m1.checksum() == m2.checksum());
    CHECK(r1.epoch_loss == r2.epoch_loss);
    CHECK(r1.epoch_satisfaction == r2.epoch_satisfaction);
}

TEST_CASE("training reduces the loss on planted personas") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        SyntheticSpec spec;
        spec.persona_count = 2;
        spec.instances_per_persona = 80;
        spec.feature_dim = 4;
        spec.modes_per_persona = 2;
        spec.algorithm_count = 2;
        spec.error_profiles = {{0.1, 2.0}, {2.0, 0.1}};
        spec.bounds = {0.0, 10.0};
        spec.seed = seed;
        SyntheticData gen = generate_synthetic(spec);
        PerformanceSpace space = build_space(gen.dataset, gen.predictions, PerfMetric::riip_mpre);
        MiningConfig mcfg = MiningConfig::defaults_for(space);
        mcfg.seed = seed;
        std::vector<Triplet> trips = mine_triplets_radius(space, gen.dataset, mcfg);

        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = seed;
        EmbeddingModel init = init_model({4, 16, 8}, Activation::relu, true, seed);
        auto [trained, report] = train(init, trips, gen.dataset, cfg);
        CHECK(report.epoch_loss.back() < report.epoch_loss.front());
    }
}

TEST_CASE("shared weights embed equal features identically during training") {
    // anchor and positive share the same feature vector on purpose
    Dataset d = feature_table({{1.0, 2.0}, {1.0, 2.0}, {-3.0, 0.5}});
    std::vector<Triplet> trips = {{"x0", "x1", "x2", Difficulty::semi_hard}};
    TrainConfig cfg;
    cfg.epochs = 6;
    EmbeddingModel m = init_model({2, 6, 3}, Activation::relu, true, 2);
    auto [trained, report] = train(m, trips, d, cfg);
    CHECK(embed(trained, d.instances[0].features) == embed(trained, d.instances[1].features));
}

TEST_CASE("normalized training distances are bounded by 2") {
    EmbeddingModel m = init_model({3, 8, 4}, Activation::relu, true, 44);
    Rng rng(45);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a(3), b(3);
        for (double& v : a) v = rng.uniform(-50.0, 50.0);
        for (double& v : b) v = rng.uniform(-50.0, 50.0);
        CHECK(distance(embed(m, a), embed(m, b), DistanceKind::euclidean) <= 2.0 + 1e-12);
        CHECK(distance(embed(m, a), embed(m, b), DistanceKind::cosine) <= 2.0 + 1e-12);
    }
}

TEST_CASE("model json round-trips with checksum protection") {
    EmbeddingModel m = init_model({4, 6, 3}, Activation::tanh, true, 77);
    std::string dir = tmp_dir("model_io");
    m.save(dir + "/m.json");
    EmbeddingModel back = EmbeddingModel::load(dir + "/m.json");
    CHECK(back.checksum() == m.checksum());
    CHECK(back.weights == m.weights);
    CHECK(back.layer_sizes == m.layer_sizes);

    // flip one digit inside the file and expect a checksum failure
    std::string text = read_text_file(dir + "/m.json");
    auto pos = text.find("0.");
    REQUIRE(pos != std::string::npos);
    text[pos + 2] = text[pos + 2] == '1' ? '2' : '1';
    write_text_file(dir + "/m.json", text);
    CHECK_THROWS_WITH_AS(EmbeddingModel::load(dir + "/m.json"), doctest::Contains("checksum"),
                         std::runtime_error);
}

TEST_CASE("exploding training reports a non-finite loss") {
    Dataset d = feature_table({{1.0, 2.0}, {1.1, 2.1}, {-3.0, 0.5}, {4.0, -1.0}});
    std::vector<Triplet> trips = {{"x0", "x1", "x2", Difficulty::semi_hard},
                                  {"x1", "x0", "x3", Difficulty::semi_hard}};
    TrainConfig cfg;
    cfg.learning_rate = 1e155;
    cfg.epochs = 10;
    cfg.optimizer = OptimizerKind::sgd;
    cfg.loss = LossKind::contrastive; // the quadratic same-pair term never deactivates
    // single linear layer: no activation can die, so the blow-up is guaranteed
    EmbeddingModel m = init_model({2, 2}, Activation::relu, false, 5);
    CHECK_THROWS_WITH_AS(train(m, trips, d, cfg), doctest::Contains("non-finite"),
                         std::runtime_error);
}

TEST_CASE("train rejects unknown triplet ids") {
    Dataset d = feature_table({{1.0, 2.0}, {2.0, 1.0}, {0.0, 0.0}});
    std::vector<Triplet> trips = {{"x0", "nope", "x2", Difficulty::easy}};
    TrainConfig cfg;
    EmbeddingModel m = init_model({2, 4, 2}, Activation::relu, true, 1);
    CHECK_THROWS_WITH_AS(train(m, trips, d, cfg), doctest::Contains("nope"), std::runtime_error);
}
