#ifndef APSEL_DATASET_HPP
#define APSEL_DATASET_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace apsel {

// Global bounds of the regression target.
struct TargetBounds {
    double lower = 0.0;
    double upper = 1.0;

    void validate() const;
    double clamp(double v) const;
    double span() const { return upper - lower; }
    bool contains(double v) const { return v >= lower && v <= upper; }
};

struct Instance {
    std::string id;
    std::vector<double> features;
    double target = 0.0;
};

struct Dataset {
    std::vector<Instance> instances;
    TargetBounds bounds;
    std::vector<std::string> feature_names;

    std::size_t size() const { return instances.size(); }
    std::size_t feature_dim() const { return feature_names.size(); }

    // Checks unique ids, uniform feature length, targets within bounds.
    void validate() const;
};

std::unordered_map<std::string, std::size_t> id_index(const Dataset& data);

// Per-instance predicted targets, one column per algorithm.
struct PredictionMatrix {
    std::vector<std::string> algorithm_ids;
    std::vector<std::vector<double>> values; // n rows, one entry per algorithm

    std::size_t rows() const { return values.size(); }
    std::size_t cols() const { return algorithm_ids.size(); }
};

struct SyntheticSpec {
    std::size_t persona_count = 0;
    std::size_t instances_per_persona = 0;
    std::size_t feature_dim = 0;
    std::size_t modes_per_persona = 1;
    std::size_t algorithm_count = 0;
    std::vector<std::vector<double>> error_profiles; // persona x algorithm noise scales
    TargetBounds bounds;
    std::uint64_t seed = 0;

    void validate() const;
};

SyntheticSpec load_synthetic_spec(const std::string& path);
void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path);

struct SyntheticData {
    Dataset dataset;
    PredictionMatrix predictions;
    std::vector<int> persona_labels;
};

Dataset load_dataset(const std::string& path, TargetBounds bounds);
PredictionMatrix load_predictions(const std::string& path, const Dataset& dataset);

void save_dataset(const Dataset& data, const std::string& path);
void save_predictions(const PredictionMatrix& preds, const Dataset& data, const std::string& path);
void save_personas(const std::vector<int>& labels, const Dataset& data, const std::string& path);
std::vector<int> load_personas(const std::string& path, const Dataset& data);

struct SplitResult {
    Dataset train_data;
    PredictionMatrix train_preds;
    Dataset test_data;
    PredictionMatrix test_preds;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

// Seed-deterministic shuffle split; fractions must be positive and sum to 1.
SplitResult split(const Dataset& data, const PredictionMatrix& preds,
                  double train_fraction, double test_fraction, std::uint64_t seed);

// The index-level core of split(), for callers without predictions yet.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double train_fraction, double test_fraction, std::uint64_t seed);

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);

SyntheticData generate_synthetic(const SyntheticSpec& spec);

} // namespace apsel

#endif
