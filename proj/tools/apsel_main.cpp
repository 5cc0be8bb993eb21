// apsel: per-instance algorithm selection via performance-space metric
// learning. Subcommands mirror the pipeline stages so every step can be run
// and inspected in isolation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "apsel/baselearners.hpp"
#include "apsel/dataset.hpp"
#include "apsel/eval.hpp"
#include "apsel/personas.hpp"
#include "apsel/perfspace.hpp"
#include "apsel/pipeline.hpp"
#include "apsel/rng.hpp"
#include "apsel/selector.hpp"
#include "apsel/siamese.hpp"
#include "apsel/textio.hpp"

namespace {

struct BoundsOpt {
    std::vector<double> values;

    apsel::TargetBounds get() const {
        apsel::TargetBounds b{values.at(0), values.at(1)};
        b.validate();
        return b;
    }
};

void add_bounds(CLI::App* cmd, BoundsOpt& bounds) {
    cmd->add_option("--bounds", bounds.values, "target bounds: lower upper")
        ->expected(2)
        ->required();
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir) {
    apsel::SyntheticSpec spec = apsel::load_synthetic_spec(spec_path);
    apsel::SyntheticData gen = apsel::generate_synthetic(spec);
    std::filesystem::create_directories(out_dir);
    apsel::save_dataset(gen.dataset, out_dir + "/dataset.csv");
    apsel::save_predictions(gen.predictions, gen.dataset, out_dir + "/predictions.csv");
    apsel::save_personas(gen.persona_labels, gen.dataset, out_dir + "/personas.csv");
    std::cout << "wrote " << gen.dataset.size() << " instances, " << gen.predictions.cols()
              << " algorithms to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Per-instance algorithm selection with performance-persona metric learning"};
    app.require_subcommand(1);

    // gen -----------------------------------------------------------------
    std::string gen_spec, gen_out;
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset with planted personas");
    gen->add_option("--spec", gen_spec, "synthetic spec JSON")->required();
    gen->add_option("--out", gen_out, "output directory")->required();

    // base-run --------------------------------------------------------------
    std::string br_data, br_out;
    BoundsOpt br_bounds;
    std::vector<std::string> br_learners = {"mean", "linear", "knn", "stump"};
    auto* base_run = app.add_subcommand("base-run", "fit built-in base learners and emit predictions");
    base_run->add_option("--data", br_data, "dataset CSV")->required();
    add_bounds(base_run, br_bounds);
    base_run->add_option("--learners", br_learners, "comma list of mean,linear,knn,stump")->delimiter(',');
    base_run->add_option("--out", br_out, "predictions CSV to write")->required();

    // perf ------------------------------------------------------------------
    std::string pf_data, pf_preds, pf_out, pf_metric = "riip-mpre";
    BoundsOpt pf_bounds;
    auto* perf = app.add_subcommand("perf", "build the performance space");
    perf->add_option("--data", pf_data, "dataset CSV")->required();
    perf->add_option("--preds", pf_preds, "predictions CSV")->required();
    add_bounds(perf, pf_bounds);
    perf->add_option("--metric", pf_metric, "mae|rank|riip|riip-mpre");
    perf->add_option("--out", pf_out, "performance-space CSV to write")->required();

    // mine ------------------------------------------------------------------
    std::string mn_data, mn_preds, mn_out, mn_metric = "riip-mpre", mn_distance = "euclidean";
    BoundsOpt mn_bounds;
    double mn_pos = 0.0, mn_neg = 0.0;
    bool mn_same_best = true, mn_diff_best = false;
    std::size_t mn_per_anchor = 2;
    std::vector<double> mn_mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    std::uint64_t mn_seed = 0;
    auto* mine = app.add_subcommand("mine", "mine anchor/positive/negative triplets by radius");
    mine->add_option("--data", mn_data, "dataset CSV")->required();
    mine->add_option("--preds", mn_preds, "predictions CSV")->required();
    add_bounds(mine, mn_bounds);
    mine->add_option("--metric", mn_metric, "space metric for mining");
    mine->add_option("--pos-radius", mn_pos, "positive radius (0 = 10% of space diameter)");
    mine->add_option("--neg-radius", mn_neg, "negative radius (0 = 25% of space diameter)");
    mine->add_option("--distance", mn_distance, "euclidean|cosine");
    mine->add_flag("--same-best,!--no-same-best", mn_same_best, "positives must share the best algorithm");
    mine->add_flag("--diff-best", mn_diff_best, "negatives must differ in best algorithm");
    mine->add_option("--per-anchor", mn_per_anchor, "triplets per anchor");
    mine->add_option("--mix", mn_mix, "difficulty mix: easy,semi_hard,hard")->delimiter(',')->expected(3);
    mine->add_option("--seed", mn_seed, "mining seed");
    mine->add_option("--out", mn_out, "triplets CSV to write")->required();

    // train ----------------------------------------------------------------
    std::string tr_data, tr_triplets, tr_out, tr_report;
    std::string tr_activation = "relu", tr_loss = "triplet", tr_optimizer = "adam", tr_distance = "euclidean";
    BoundsOpt tr_bounds;
    std::vector<std::size_t> tr_layers = {64, 32, 16};
    bool tr_normalize = true;
    double tr_margin = 0.7, tr_lr = 1e-3;
    std::size_t tr_epochs = 40, tr_batch = 32;
    std::uint64_t tr_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "train the siamese embedding network");
    train_cmd->add_option("--data", tr_data, "dataset CSV (features for the triplet ids)")->required();
    add_bounds(train_cmd, tr_bounds);
    train_cmd->add_option("--triplets", tr_triplets, "triplets CSV")->required();
    train_cmd->add_option("--layers", tr_layers, "hidden and embedding sizes")->delimiter(',');
    train_cmd->add_option("--activation", tr_activation, "relu|tanh");
    train_cmd->add_flag("--normalize,!--no-normalize", tr_normalize, "project embeddings to unit norm");
    train_cmd->add_option("--margin", tr_margin, "triplet margin alpha");
    train_cmd->add_option("--loss", tr_loss, "triplet|contrastive");
    train_cmd->add_option("--lr", tr_lr, "learning rate");
    train_cmd->add_option("--epochs", tr_epochs, "training epochs");
    train_cmd->add_option("--batch", tr_batch, "mini-batch size");
    train_cmd->add_option("--optimizer", tr_optimizer, "adam|sgd");
    train_cmd->add_option("--distance", tr_distance, "euclidean|cosine");
    train_cmd->add_option("--seed", tr_seed, "training seed");
    train_cmd->add_option("--out", tr_out, "model JSON to write")->required();
    train_cmd->add_option("--report", tr_report, "optional per-epoch report JSON");

    // select ----------------------------------------------------------------
    std::string sl_model, sl_train_data, sl_train_preds, sl_test_data, sl_out, sl_selector_out;
    std::string sl_distance = "euclidean", sl_aggregation = "mean";
    BoundsOpt sl_bounds;
    std::size_t sl_k = 5;
    double sl_alpha = 0.7;
    auto* select_cmd = app.add_subcommand("select", "select algorithms for unlabelled instances");
    select_cmd->add_option("--model", sl_model, "trained embedding model JSON")->required();
    select_cmd->add_option("--train-data", sl_train_data, "labelled dataset CSV")->required();
    select_cmd->add_option("--train-preds", sl_train_preds, "labelled predictions CSV")->required();
    add_bounds(select_cmd, sl_bounds);
    select_cmd->add_option("--test-data", sl_test_data, "unlabelled dataset CSV")->required();
    select_cmd->add_option("--k", sl_k, "neighbors to use");
    select_cmd->add_option("--alpha", sl_alpha, "neighbor distance cutoff");
    select_cmd->add_option("--distance", sl_distance, "euclidean|cosine");
    select_cmd->add_option("--aggregation", sl_aggregation, "mean|vote");
    select_cmd->add_option("--out", sl_out, "selections CSV to write")->required();
    select_cmd->add_option("--save-selector", sl_selector_out, "optional selector JSON to write");

    // eval -------------------------------------------------------------------
    std::string ev_train_data, ev_train_preds, ev_test_data, ev_test_preds, ev_out;
    BoundsOpt ev_bounds;
    std::vector<std::string> ev_methods = {"sbs", "vbs", "random", "feature-knn"};
    std::vector<std::string> ev_selections;
    std::size_t ev_knn_k = 5;
    std::uint64_t ev_seed = 0;
    auto* eval_cmd = app.add_subcommand("eval", "score selection methods against SBS/VBS");
    eval_cmd->add_option("--train-data", ev_train_data, "train dataset CSV")->required();
    eval_cmd->add_option("--train-preds", ev_train_preds, "train predictions CSV")->required();
    add_bounds(eval_cmd, ev_bounds);
    eval_cmd->add_option("--test-data", ev_test_data, "test dataset CSV")->required();
    eval_cmd->add_option("--test-preds", ev_test_preds, "test predictions CSV")->required();
    eval_cmd->add_option("--methods", ev_methods, "built-ins: sbs,vbs,random,feature-knn")->delimiter(',');
    eval_cmd->add_option("--selections", ev_selections, "extra methods as name=selections.csv (repeatable)");
    eval_cmd->add_option("--knn-k", ev_knn_k, "k for the feature-knn baseline");
    eval_cmd->add_option("--seed", ev_seed, "seed for the random baseline");
    eval_cmd->add_option("--out", ev_out, "report JSON to write")->required();

    // plot -------------------------------------------------------------------
    std::string pl_data, pl_preds, pl_out, pl_metric = "riip-mpre";
    BoundsOpt pl_bounds;
    std::size_t pl_sample = 1000;
    std::uint64_t pl_seed = 0;
    auto* plot_cmd = app.add_subcommand("plot", "emit pairwise performance-space scatter SVGs");
    plot_cmd->add_option("--data", pl_data, "dataset CSV")->required();
    plot_cmd->add_option("--preds", pl_preds, "predictions CSV")->required();
    add_bounds(plot_cmd, pl_bounds);
    plot_cmd->add_option("--metric", pl_metric, "mae|rank|riip|riip-mpre");
    plot_cmd->add_option("--sample", pl_sample, "instance sample size");
    plot_cmd->add_option("--seed", pl_seed, "sampling seed");
    plot_cmd->add_option("--out", pl_out, "output directory")->required();

    // pipeline ----------------------------------------------------------------
    std::string pp_config;
    std::uint64_t pp_seed = 0;
    auto* pipeline_cmd = app.add_subcommand("pipeline", "run the full experiment from a config JSON");
    pipeline_cmd->add_option("--config", pp_config, "run config JSON")->required();
    auto* pp_seed_opt = pipeline_cmd->add_option(
        "--seed", pp_seed, "override the config's global seed (explicit stage seeds still win)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_spec, gen_out);

        if (base_run->parsed()) {
            apsel::Dataset data = apsel::load_dataset(br_data, br_bounds.get());
            std::vector<apsel::BaseLearner> learners;
            for (const std::string& name : br_learners) {
                learners.push_back(apsel::BaseLearner::fit(apsel::parse_learner_kind(name), data));
            }
            apsel::PredictionMatrix preds = apsel::predict_all(learners, data);
            apsel::save_predictions(preds, data, br_out);
            std::cout << "wrote " << preds.rows() << "x" << preds.cols() << " predictions to " << br_out << "\n";
            return 0;
        }

        if (perf->parsed()) {
            apsel::Dataset data = apsel::load_dataset(pf_data, pf_bounds.get());
            apsel::PredictionMatrix preds = apsel::load_predictions(pf_preds, data);
            apsel::PerformanceSpace space = apsel::build_space(data, preds, apsel::parse_metric(pf_metric));
            apsel::save_space(space, pf_out);
            std::cout << "wrote " << space.size() << "x" << space.algo_count() << " space to " << pf_out << "\n";
            return 0;
        }

        if (mine->parsed()) {
            apsel::Dataset data = apsel::load_dataset(mn_data, mn_bounds.get());
            apsel::PredictionMatrix preds = apsel::load_predictions(mn_preds, data);
            apsel::PerformanceSpace space = apsel::build_space(data, preds, apsel::parse_metric(mn_metric));
            apsel::MiningConfig cfg;
            cfg.distance_kind = apsel::parse_distance(mn_distance);
            cfg.require_same_best = mn_same_best;
            cfg.require_diff_best = mn_diff_best;
            cfg.triplets_per_anchor = mn_per_anchor;
            cfg.difficulty_mix = {mn_mix.at(0), mn_mix.at(1), mn_mix.at(2)};
            cfg.seed = mn_seed;
            double diameter = apsel::bbox_diameter(space);
            cfg.pos_radius = mn_pos > 0.0 ? mn_pos : 0.10 * diameter;
            cfg.neg_radius = mn_neg > 0.0 ? mn_neg : 0.25 * diameter;
            std::vector<apsel::Triplet> triplets = apsel::mine_triplets_radius(space, data, cfg);
            apsel::save_triplets(triplets, mn_out);
            std::cout << "wrote " << triplets.size() << " triplets to " << mn_out << "\n";
            return 0;
        }

        if (train_cmd->parsed()) {
            apsel::Dataset data = apsel::load_dataset(tr_data, tr_bounds.get());
            std::vector<apsel::Triplet> triplets = apsel::load_triplets(tr_triplets);
            apsel::TrainConfig cfg;
            cfg.margin = tr_margin;
            cfg.loss = apsel::parse_loss(tr_loss);
            cfg.learning_rate = tr_lr;
            cfg.epochs = tr_epochs;
            cfg.batch_size = tr_batch;
            cfg.optimizer = apsel::parse_optimizer(tr_optimizer);
            cfg.seed = tr_seed;
            cfg.distance_kind = apsel::parse_distance(tr_distance);

            std::vector<std::size_t> sizes;
            sizes.push_back(data.feature_dim());
            sizes.insert(sizes.end(), tr_layers.begin(), tr_layers.end());
            apsel::EmbeddingModel model = apsel::init_model(sizes, apsel::parse_activation(tr_activation),
                                                            tr_normalize, apsel::Rng::mix(tr_seed, 1));
            auto [trained, report] = apsel::train(std::move(model), triplets, data, cfg);
            trained.save(tr_out);
            std::cout << "epochs " << report.epoch_loss.size() << ", final loss "
                      << report.epoch_loss.back() << ", satisfaction "
                      << report.epoch_satisfaction.back() << "\n";
            if (!tr_report.empty()) {
                nlohmann::ordered_json rj;
                rj["epoch_loss"] = report.epoch_loss;
                rj["epoch_satisfaction"] = report.epoch_satisfaction;
                rj["final_checksum"] = report.final_checksum;
                apsel::write_text_file(tr_report, rj.dump(2) + "\n");
            }
            return 0;
        }

        if (select_cmd->parsed()) {
            apsel::EmbeddingModel model = apsel::EmbeddingModel::load(sl_model);
            apsel::Dataset train_data = apsel::load_dataset(sl_train_data, sl_bounds.get());
            apsel::PredictionMatrix train_preds = apsel::load_predictions(sl_train_preds, train_data);
            apsel::Dataset test_data = apsel::load_dataset(sl_test_data, sl_bounds.get());
            apsel::SelectorModel selector =
                apsel::fit_selector(model, train_data, train_preds, sl_k, sl_alpha,
                                    apsel::parse_distance(sl_distance), apsel::parse_aggregation(sl_aggregation));
            if (!sl_selector_out.empty()) selector.save(sl_selector_out);
            std::vector<apsel::SelectionOutcome> outcomes = apsel::select_batch(selector, test_data);
            apsel::save_selections(outcomes, test_data, train_preds.algorithm_ids, sl_out);
            std::cout << "wrote " << outcomes.size() << " selections to " << sl_out << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            apsel::Dataset train_data = apsel::load_dataset(ev_train_data, ev_bounds.get());
            apsel::PredictionMatrix train_preds = apsel::load_predictions(ev_train_preds, train_data);
            apsel::Dataset test_data = apsel::load_dataset(ev_test_data, ev_bounds.get());
            apsel::PredictionMatrix test_preds = apsel::load_predictions(ev_test_preds, test_data);
            apsel::ErrorMatrix train_errors = apsel::absolute_errors(train_data, train_preds);
            apsel::ErrorMatrix test_errors = apsel::absolute_errors(test_data, test_preds);
            apsel::PerformanceSpace train_riip =
                apsel::build_space(train_data, train_preds, apsel::PerfMetric::riip_mpre);

            std::vector<apsel::MethodChoices> methods;
            for (const std::string& name : ev_methods) {
                apsel::MethodChoices mc;
                mc.name = name;
                if (name == "sbs") {
                    mc.chosen.assign(test_errors.size(), apsel::single_best(train_errors));
                } else if (name == "vbs") {
                    for (const auto& row : test_errors) {
                        int best = 0;
                        for (std::size_t k = 1; k < row.size(); ++k) {
                            if (row[k] < row[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
                        }
                        mc.chosen.push_back(best);
                    }
                } else if (name == "random") {
                    mc.chosen = apsel::random_choices(test_errors.size(), test_preds.cols(), ev_seed);
                } else if (name == "feature-knn") {
                    mc.chosen = apsel::feature_knn_baseline(train_data, train_riip, test_data, ev_knn_k);
                } else {
                    throw std::runtime_error("eval: unknown built-in method '" + name +
                                             "'; supply it via --selections name=path");
                }
                methods.push_back(std::move(mc));
            }
            for (const std::string& spec : ev_selections) {
                auto pos = spec.find('=');
                if (pos == std::string::npos) {
                    throw std::runtime_error("eval: --selections expects name=path, got '" + spec + "'");
                }
                apsel::MethodChoices mc;
                mc.name = spec.substr(0, pos);
                std::string path = spec.substr(pos + 1);
                std::ifstream in(path);
                if (!in) throw std::runtime_error("eval: cannot open selections: " + path);
                std::string line;
                std::getline(in, line); // header
                std::unordered_map<std::string, std::pair<int, bool>> by_id;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    auto cells = apsel::split_csv_line(line);
                    if (cells.size() != 4) throw std::runtime_error("eval: malformed selections row in " + path);
                    int algo = -1;
                    for (std::size_t k = 0; k < test_preds.algorithm_ids.size(); ++k) {
                        if (test_preds.algorithm_ids[k] == cells[1]) algo = static_cast<int>(k);
                    }
                    if (algo < 0) throw std::runtime_error("eval: unknown algorithm '" + cells[1] + "' in " + path);
                    by_id[cells[0]] = {algo, cells[2] == "1"};
                }
                for (const auto& ins : test_data.instances) {
                    auto it = by_id.find(ins.id);
                    if (it == by_id.end()) {
                        throw std::runtime_error("eval: selections " + path + " missing id '" + ins.id + "'");
                    }
                    mc.chosen.push_back(it->second.first);
                    mc.used_fallback.push_back(it->second.second);
                }
                methods.push_back(std::move(mc));
            }

            std::vector<apsel::EvalRecord> records = apsel::evaluate(methods, test_errors, train_errors);
            apsel::save_report(records, ev_out);
            for (const auto& r : records) {
                std::cout << r.method << ": mae " << r.deployed_mae << ", accuracy "
                          << r.selection_accuracy << ", regret " << r.regret << "\n";
            }
            return 0;
        }

        if (plot_cmd->parsed()) {
            apsel::Dataset data = apsel::load_dataset(pl_data, pl_bounds.get());
            apsel::PredictionMatrix preds = apsel::load_predictions(pl_preds, data);
            apsel::PerformanceSpace space = apsel::build_space(data, preds, apsel::parse_metric(pl_metric));
            apsel::PerformanceSpace sampled = apsel::sample_space(space, pl_sample, pl_seed);
            std::vector<std::string> files = apsel::emit_scatter(sampled, pl_out);
            std::cout << "wrote " << files.size() << " files to " << pl_out << "\n";
            return 0;
        }

        if (pipeline_cmd->parsed()) {
            apsel::RunConfig cfg = pp_seed_opt->count()
                                       ? apsel::RunConfig::from_json_file(pp_config, &pp_seed)
                                       : apsel::RunConfig::from_json_file(pp_config);
            apsel::PipelineResult result = apsel::run_pipeline(cfg);
            for (const auto& r : result.records) {
                std::cout << r.method << ": mae " << r.deployed_mae << ", accuracy "
                          << r.selection_accuracy << ", regret " << r.regret;
                if (r.gap_closed) std::cout << ", gap closed " << *r.gap_closed;
                std::cout << "\n";
            }
            std::cout << "report: " << result.report_path << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
