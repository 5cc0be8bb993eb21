#ifndef APSEL_PIPELINE_HPP
#define APSEL_PIPELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "apsel/baselearners.hpp"
#include "apsel/dataset.hpp"
#include "apsel/eval.hpp"
#include "apsel/personas.hpp"
#include "apsel/perfspace.hpp"
#include "apsel/selector.hpp"
#include "apsel/siamese.hpp"

namespace apsel {

// Full experiment configuration. Parsed strictly: unknown keys are rejected,
// and the global seed feeds every stage whose seed is not set explicitly.
struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "run";

    std::string dataset_path;     // empty when generated from a synthetic spec
    std::string predictions_path; // empty -> built-in base learners
    std::string synthetic_path;
    TargetBounds bounds;
    bool bounds_set = false;

    std::vector<LearnerKind> learners = {LearnerKind::mean, LearnerKind::linear,
                                         LearnerKind::knn, LearnerKind::stump};

    double train_fraction = 0.8;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 0;

    PerfMetric metric = PerfMetric::riip_mpre;

    MiningConfig mining; // radii of 0 mean diameter-relative defaults

    std::vector<std::size_t> layers = {64, 32, 16}; // hidden... -> embedding dim
    Activation activation = Activation::relu;
    bool normalize_output = true;
    TrainConfig training;

    std::size_t selector_k = 5;
    double selector_alpha = 0.0; // 0 -> equal to the training margin
    Aggregation aggregation = Aggregation::mean_perf;

    std::vector<std::string> methods = {"siamese", "feature-knn", "cluster", "sbs", "vbs", "random"};
    std::size_t eval_knn_k = 5;
    std::size_t cluster_k = 5;
    std::uint64_t eval_seed = 0;

    bool plot_enabled = true;
    std::size_t plot_sample = 1000;
    std::uint64_t plot_seed = 0;

    // seed_override replaces the config's global seed before stage seeds
    // derive from it; stage seeds set explicitly in the file still win.
    static RunConfig from_json_file(const std::string& path, const std::uint64_t* seed_override = nullptr);
    std::string resolved_json() const; // the config as run, all seeds explicit
    void validate() const;

    // Fill every stage seed from the global seed; explicit stage seeds in a
    // config file override these afterwards.
    void derive_seeds();
};

struct PipelineResult {
    std::vector<EvalRecord> records;
    std::string report_path;
    std::string manifest_path;
};

// gen/ingest -> base-run -> split -> perf -> mine -> train -> select -> eval
// -> plot, every artifact written under config.out_dir plus a manifest of
// file checksums. Errors carry the failing stage name.
PipelineResult run_pipeline(const RunConfig& config);

} // namespace apsel

#endif
