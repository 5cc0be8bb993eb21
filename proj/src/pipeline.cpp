#include "apsel/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "apsel/rng.hpp"
#include "apsel/textio.hpp"

#include "json.hpp"

namespace apsel {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
    if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw std::runtime_error("config: unknown key '" + where + "." + it.key() + "'");
        }
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return it->get<T>();
}

[[noreturn]] void stage_fail(const std::string& stage, const std::exception& e) {
    throw std::runtime_error(stage + ": " + e.what());
}

} // namespace

RunConfig RunConfig::from_json_file(const std::string& path, const std::uint64_t* seed_override) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }

    RunConfig cfg;
    try {
        reject_unknown(j, "", {"seed", "out_dir", "data", "learners", "split", "metric", "mining",
                               "training", "selector", "eval", "plot"});
        cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
        if (seed_override) cfg.seed = *seed_override;
        cfg.derive_seeds();
        cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);

        if (j.contains("data")) {
            const json& d = j["data"];
            reject_unknown(d, "data", {"dataset", "predictions", "synthetic", "bounds"});
            cfg.dataset_path = get_or<std::string>(d, "dataset", "");
            cfg.predictions_path = get_or<std::string>(d, "predictions", "");
            cfg.synthetic_path = get_or<std::string>(d, "synthetic", "");
            if (d.contains("bounds")) {
                cfg.bounds.lower = d["bounds"].at(0).get<double>();
                cfg.bounds.upper = d["bounds"].at(1).get<double>();
                cfg.bounds_set = true;
            }
        }
        if (j.contains("learners")) {
            cfg.learners.clear();
            for (const auto& name : j["learners"]) {
                cfg.learners.push_back(parse_learner_kind(name.get<std::string>()));
            }
        }
        if (j.contains("split")) {
            const json& s = j["split"];
            reject_unknown(s, "split", {"train_fraction", "test_fraction", "seed"});
            cfg.train_fraction = get_or<double>(s, "train_fraction", cfg.train_fraction);
            cfg.test_fraction = get_or<double>(s, "test_fraction", cfg.test_fraction);
            if (s.contains("seed")) cfg.split_seed = s["seed"].get<std::uint64_t>();
        }
        if (j.contains("metric")) cfg.metric = parse_metric(j["metric"].get<std::string>());

        if (j.contains("mining")) {
            const json& m = j["mining"];
            reject_unknown(m, "mining", {"pos_radius", "neg_radius", "distance", "same_best",
                                         "diff_best", "per_anchor", "mix", "seed"});
            cfg.mining.pos_radius = get_or<double>(m, "pos_radius", cfg.mining.pos_radius);
            cfg.mining.neg_radius = get_or<double>(m, "neg_radius", cfg.mining.neg_radius);
            if (m.contains("distance")) cfg.mining.distance_kind = parse_distance(m["distance"].get<std::string>());
            cfg.mining.require_same_best = get_or<bool>(m, "same_best", cfg.mining.require_same_best);
            cfg.mining.require_diff_best = get_or<bool>(m, "diff_best", cfg.mining.require_diff_best);
            cfg.mining.triplets_per_anchor = get_or<std::size_t>(m, "per_anchor", cfg.mining.triplets_per_anchor);
            if (m.contains("mix")) {
                auto mix = m["mix"].get<std::vector<double>>();
                if (mix.size() != 3) throw std::runtime_error("config: mining.mix must have 3 entries");
                cfg.mining.difficulty_mix = {mix[0], mix[1], mix[2]};
            }
            if (m.contains("seed")) cfg.mining.seed = m["seed"].get<std::uint64_t>();
        }

        if (j.contains("training")) {
            const json& t = j["training"];
            reject_unknown(t, "training", {"layers", "activation", "normalize", "margin", "loss",
                                           "lr", "epochs", "batch", "optimizer", "distance", "seed",
                                           "init_seed"});
            if (t.contains("layers")) cfg.layers = t["layers"].get<std::vector<std::size_t>>();
            if (t.contains("activation")) cfg.activation = parse_activation(t["activation"].get<std::string>());
            cfg.normalize_output = get_or<bool>(t, "normalize", cfg.normalize_output);
            cfg.training.margin = get_or<double>(t, "margin", cfg.training.margin);
            if (t.contains("loss")) cfg.training.loss = parse_loss(t["loss"].get<std::string>());
            cfg.training.learning_rate = get_or<double>(t, "lr", cfg.training.learning_rate);
            cfg.training.epochs = get_or<std::size_t>(t, "epochs", cfg.training.epochs);
            cfg.training.batch_size = get_or<std::size_t>(t, "batch", cfg.training.batch_size);
            if (t.contains("optimizer")) cfg.training.optimizer = parse_optimizer(t["optimizer"].get<std::string>());
            if (t.contains("distance")) cfg.training.distance_kind = parse_distance(t["distance"].get<std::string>());
            if (t.contains("seed")) cfg.training.seed = t["seed"].get<std::uint64_t>();
        }

        if (j.contains("selector")) {
            const json& s = j["selector"];
            reject_unknown(s, "selector", {"k", "alpha", "aggregation"});
            cfg.selector_k = get_or<std::size_t>(s, "k", cfg.selector_k);
            cfg.selector_alpha = get_or<double>(s, "alpha", cfg.selector_alpha);
            if (s.contains("aggregation")) cfg.aggregation = parse_aggregation(s["aggregation"].get<std::string>());
        }

        if (j.contains("eval")) {
            const json& e = j["eval"];
            reject_unknown(e, "eval", {"methods", "knn_k", "cluster_k", "seed"});
            if (e.contains("methods")) cfg.methods = e["methods"].get<std::vector<std::string>>();
            cfg.eval_knn_k = get_or<std::size_t>(e, "knn_k", cfg.eval_knn_k);
            cfg.cluster_k = get_or<std::size_t>(e, "cluster_k", cfg.cluster_k);
            if (e.contains("seed")) cfg.eval_seed = e["seed"].get<std::uint64_t>();
        }

        if (j.contains("plot")) {
            const json& p = j["plot"];
            reject_unknown(p, "plot", {"enabled", "sample", "seed"});
            cfg.plot_enabled = get_or<bool>(p, "enabled", cfg.plot_enabled);
            cfg.plot_sample = get_or<std::size_t>(p, "sample", cfg.plot_sample);
            if (p.contains("seed")) cfg.plot_seed = p["seed"].get<std::uint64_t>();
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

void RunConfig::derive_seeds() {
    split_seed = Rng::mix(seed, 101);
    mining.seed = Rng::mix(seed, 102);
    training.seed = Rng::mix(seed, 103);
    eval_seed = Rng::mix(seed, 104);
    plot_seed = Rng::mix(seed, 105);
}

void RunConfig::validate() const {
    if (out_dir.empty()) throw std::runtime_error("config: out_dir must not be empty");
    if (synthetic_path.empty() && dataset_path.empty()) {
        throw std::runtime_error("config: need data.dataset or data.synthetic");
    }
    if (synthetic_path.empty() && !bounds_set) {
        throw std::runtime_error("config: data.bounds required when loading a dataset");
    }
    if (layers.empty()) throw std::runtime_error("config: training.layers must not be empty");
    if (learners.empty() && predictions_path.empty() && synthetic_path.empty()) {
        throw std::runtime_error("config: no predictions and no learners configured");
    }
    training.validate();
    static const std::set<std::string> known_methods = {"siamese", "feature-knn", "cluster",
                                                        "sbs", "vbs", "random"};
    for (const std::string& m : methods) {
        if (!known_methods.count(m)) throw std::runtime_error("config: unknown method '" + m + "'");
    }
}

std::string RunConfig::resolved_json() const {
    ojson j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    ojson data;
    data["dataset"] = dataset_path;
    data["predictions"] = predictions_path;
    data["synthetic"] = synthetic_path;
    if (bounds_set) data["bounds"] = {bounds.lower, bounds.upper};
    j["data"] = data;
    {
        std::vector<std::string> names;
        for (LearnerKind k : learners) names.push_back(learner_name(k));
        j["learners"] = names;
    }
    j["split"] = {{"train_fraction", train_fraction}, {"test_fraction", test_fraction}, {"seed", split_seed}};
    j["metric"] = metric_name(metric);
    j["mining"] = {{"pos_radius", mining.pos_radius},
                   {"neg_radius", mining.neg_radius},
                   {"distance", distance_name(mining.distance_kind)},
                   {"same_best", mining.require_same_best},
                   {"diff_best", mining.require_diff_best},
                   {"per_anchor", mining.triplets_per_anchor},
                   {"mix", {mining.difficulty_mix[0], mining.difficulty_mix[1], mining.difficulty_mix[2]}},
                   {"seed", mining.seed}};
    j["training"] = {{"layers", layers},
                     {"activation", activation_name(activation)},
                     {"normalize", normalize_output},
                     {"margin", training.margin},
                     {"loss", training.loss == LossKind::triplet ? "triplet" : "contrastive"},
                     {"lr", training.learning_rate},
                     {"epochs", training.epochs},
                     {"batch", training.batch_size},
                     {"optimizer", training.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                     {"distance", distance_name(training.distance_kind)},
                     {"seed", training.seed}};
    j["selector"] = {{"k", selector_k}, {"alpha", selector_alpha}, {"aggregation", aggregation_name(aggregation)}};
    j["eval"] = {{"methods", methods}, {"knn_k", eval_knn_k}, {"cluster_k", cluster_k}, {"seed", eval_seed}};
    j["plot"] = {{"enabled", plot_enabled}, {"sample", plot_sample}, {"seed", plot_seed}};
    return j.dump(2);
}

PipelineResult run_pipeline(const RunConfig& config) {
    config.validate();
    fs::create_directories(config.out_dir);
    const std::string out = config.out_dir;
    std::vector<std::string> artifacts;
    auto track = [&](const std::string& path) { artifacts.push_back(path); };

    // --- data ---------------------------------------------------------
    Dataset data;
    PredictionMatrix preds;
    bool have_preds = false;
    try {
        if (!config.synthetic_path.empty()) {
            SyntheticSpec spec = load_synthetic_spec(config.synthetic_path);
            SyntheticData gen = generate_synthetic(spec);
            data = std::move(gen.dataset);
            preds = std::move(gen.predictions);
            have_preds = true;
            save_dataset(data, out + "/dataset.csv");
            save_predictions(preds, data, out + "/predictions.csv");
            save_personas(gen.persona_labels, data, out + "/personas.csv");
            track(out + "/dataset.csv");
            track(out + "/predictions.csv");
            track(out + "/personas.csv");
        } else {
            data = load_dataset(config.dataset_path, config.bounds);
            if (!config.predictions_path.empty()) {
                preds = load_predictions(config.predictions_path, data);
                have_preds = true;
            }
        }
    } catch (const std::exception& e) {
        stage_fail("dataset", e);
    }

    // --- split + base-run ----------------------------------------------
    Dataset train_data, test_data;
    PredictionMatrix train_preds, test_preds;
    try {
        auto [train_idx, test_idx] =
            split_indices(data.size(), config.train_fraction, config.test_fraction, config.split_seed);
        train_data = subset(data, train_idx);
        test_data = subset(data, test_idx);
        if (have_preds) {
            train_preds.algorithm_ids = preds.algorithm_ids;
            test_preds.algorithm_ids = preds.algorithm_ids;
            for (std::size_t i : train_idx) train_preds.values.push_back(preds.values[i]);
            for (std::size_t i : test_idx) test_preds.values.push_back(preds.values[i]);
        } else {
            // Base learners fitted on the train split only.
            std::vector<BaseLearner> learners;
            for (LearnerKind kind : config.learners) {
                learners.push_back(BaseLearner::fit(kind, train_data));
            }
            train_preds = predict_all(learners, train_data);
            test_preds = predict_all(learners, test_data);
        }
        save_dataset(train_data, out + "/train.csv");
        save_dataset(test_data, out + "/test.csv");
        save_predictions(train_preds, train_data, out + "/train_predictions.csv");
        save_predictions(test_preds, test_data, out + "/test_predictions.csv");
        track(out + "/train.csv");
        track(out + "/test.csv");
        track(out + "/train_predictions.csv");
        track(out + "/test_predictions.csv");
    } catch (const std::exception& e) {
        stage_fail("split", e);
    }

    // --- perf ------------------------------------------------------------
    PerformanceSpace mining_space, train_riip;
    try {
        mining_space = build_space(train_data, train_preds, config.metric);
        train_riip = config.metric == PerfMetric::riip_mpre
                         ? mining_space
                         : build_space(train_data, train_preds, PerfMetric::riip_mpre);
        save_space(mining_space, out + "/perfspace.csv");
        track(out + "/perfspace.csv");
    } catch (const std::exception& e) {
        stage_fail("perf", e);
    }

    // --- mine -------------------------------------------------------------
    std::vector<Triplet> triplets;
    MiningConfig mining = config.mining;
    try {
        if (mining.pos_radius == 0.0 && mining.neg_radius == 0.0) {
            double diameter = bbox_diameter(mining_space);
            mining.pos_radius = 0.10 * diameter;
            mining.neg_radius = 0.25 * diameter;
        }
        triplets = mine_triplets_radius(mining_space, train_data, mining);
        save_triplets(triplets, out + "/triplets.csv");
        track(out + "/triplets.csv");
    } catch (const std::exception& e) {
        stage_fail("mine", e);
    }

    // --- train --------------------------------------------------------
    EmbeddingModel model;
    try {
        std::vector<std::size_t> sizes;
        sizes.push_back(train_data.feature_dim());
        sizes.insert(sizes.end(), config.layers.begin(), config.layers.end());
        model = init_model(sizes, config.activation, config.normalize_output,
                           Rng::mix(config.training.seed, 1));
        auto [trained, report] = train(std::move(model), triplets, train_data, config.training);
        model = std::move(trained);
        model.save(out + "/model.json");
        track(out + "/model.json");

        ojson rj;
        rj["epoch_loss"] = report.epoch_loss;
        rj["epoch_satisfaction"] = report.epoch_satisfaction;
        rj["final_checksum"] = report.final_checksum;
        write_text_file(out + "/train_report.json", rj.dump(2) + "\n");
        track(out + "/train_report.json");
    } catch (const std::exception& e) {
        stage_fail("train", e);
    }

    // --- select ---------------------------------------------------------
    SelectorModel selector;
    std::vector<SelectionOutcome> outcomes;
    try {
        double alpha = config.selector_alpha > 0.0 ? config.selector_alpha : config.training.margin;
        selector = fit_selector(model, train_data, train_preds, config.selector_k, alpha,
                                config.training.distance_kind, config.aggregation);
        selector.save(out + "/selector.json");
        track(out + "/selector.json");
        outcomes = select_batch(selector, test_data);
        save_selections(outcomes, test_data, train_preds.algorithm_ids, out + "/selections.csv");
        track(out + "/selections.csv");
    } catch (const std::exception& e) {
        stage_fail("select", e);
    }

    // --- eval ---------------------------------------------------------
    PipelineResult result;
    try {
        ErrorMatrix train_errors = absolute_errors(train_data, train_preds);
        ErrorMatrix test_errors = absolute_errors(test_data, test_preds);
        const std::size_t n_test = test_errors.size();
        const std::size_t m = train_preds.cols();

        std::vector<MethodChoices> methods;
        for (const std::string& name : config.methods) {
            MethodChoices mc;
            mc.name = name;
            if (name == "siamese") {
                for (const auto& o : outcomes) {
                    mc.chosen.push_back(o.chosen);
                    mc.used_fallback.push_back(o.used_fallback);
                }
            } else if (name == "feature-knn") {
                mc.chosen = feature_knn_baseline(train_data, train_riip, test_data, config.eval_knn_k);
            } else if (name == "cluster") {
                PersonaAssignment clusters = kmeans(mining_space, std::min(config.cluster_k, mining_space.size()),
                                                    Rng::mix(config.eval_seed, 7));
                std::vector<Triplet> ctrips = mine_triplets_cluster(mining_space, clusters,
                                                                    mining.triplets_per_anchor,
                                                                    Rng::mix(config.eval_seed, 8));
                std::vector<std::size_t> sizes;
                sizes.push_back(train_data.feature_dim());
                sizes.insert(sizes.end(), config.layers.begin(), config.layers.end());
                EmbeddingModel cmodel = init_model(sizes, config.activation, config.normalize_output,
                                                   Rng::mix(config.training.seed, 1));
                auto [ctrained, creport] = train(std::move(cmodel), ctrips, train_data, config.training);
                double alpha = config.selector_alpha > 0.0 ? config.selector_alpha : config.training.margin;
                SelectorModel csel = fit_selector(ctrained, train_data, train_preds, config.selector_k,
                                                  alpha, config.training.distance_kind, config.aggregation);
                for (const auto& o : select_batch(csel, test_data)) {
                    mc.chosen.push_back(o.chosen);
                    mc.used_fallback.push_back(o.used_fallback);
                }
            } else if (name == "sbs") {
                mc.chosen.assign(n_test, single_best(train_errors));
            } else if (name == "vbs") {
                for (const auto& row : test_errors) {
                    int best = 0;
                    for (std::size_t k = 1; k < m; ++k) {
                        if (row[k] < row[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
                    }
                    mc.chosen.push_back(best);
                }
            } else if (name == "random") {
                mc.chosen = random_choices(n_test, m, config.eval_seed);
            }
            methods.push_back(std::move(mc));
        }

        result.records = evaluate(methods, test_errors, train_errors);
        save_report(result.records, out + "/report.json");
        result.report_path = out + "/report.json";
        track(result.report_path);
    } catch (const std::exception& e) {
        stage_fail("eval", e);
    }

    // --- plot --------------------------------------------------------
    if (config.plot_enabled) {
        try {
            PerformanceSpace sampled = sample_space(mining_space, config.plot_sample, config.plot_seed);
            for (const std::string& p : emit_scatter(sampled, out + "/plots")) track(p);
        } catch (const std::exception& e) {
            stage_fail("plot", e);
        }
    }

    // --- manifest ----------------------------------------------------
    try {
        std::map<std::string, std::string> checksums;
        for (const std::string& path : artifacts) {
            std::string rel = fs::relative(path, out).string();
            checksums[rel] = fnv1a_hex(read_text_file(path));
        }
        ojson manifest;
        manifest["config"] = ojson::parse(config.resolved_json());
        ojson files;
        for (const auto& [rel, sum] : checksums) files[rel] = sum;
        manifest["files"] = files;
        result.manifest_path = out + "/manifest.json";
        write_text_file(result.manifest_path, manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        stage_fail("manifest", e);
    }
    return result;
}

} // namespace apsel
