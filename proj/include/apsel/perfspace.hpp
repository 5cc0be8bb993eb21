#ifndef APSEL_PERFSPACE_HPP
#define APSEL_PERFSPACE_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apsel/dataset.hpp"

namespace apsel {

enum class PerfMetric { absolute_error, rank, riip, riip_mpre };

PerfMetric parse_metric(const std::string& name); // mae | rank | riip | riip-mpre
std::string metric_name(PerfMetric metric);

enum class DistanceKind { euclidean, cosine };

DistanceKind parse_distance(const std::string& name);
std::string distance_name(DistanceKind kind);

double absolute_error(double y, double yhat);

// Ascending error -> ascending rank from 1; exact ties share the minimum rank.
std::vector<int> rank_row(const std::vector<double>& errors);

// Largest error any algorithm could make on an instance with target y.
double max_possible_error(double y, TargetBounds bounds);

// |y - yhat| / max_possible_error; in [0,1] for in-bounds predictions.
double relative_error(double y, double yhat, TargetBounds bounds);

// Relative intra-instance performance: best error over this error.
// An algorithm with zero error scores 1; others score 0 when the best is 0.
std::vector<double> riip_row(const std::vector<double>& errors);

// The composite metric (1 - relative_error) * riip, elementwise in [0,1].
std::vector<double> riip_mpre_row(double y, const std::vector<double>& yhats, TargetBounds bounds);

// n x m absolute errors of predictions against targets.
std::vector<std::vector<double>> absolute_errors(const Dataset& data, const PredictionMatrix& preds);

// One point per instance, one dimension per algorithm.
struct PerformanceSpace {
    PerfMetric metric = PerfMetric::riip_mpre;
    std::vector<std::string> algorithm_ids;
    std::vector<std::string> instance_ids;
    std::vector<std::vector<double>> values;
    std::vector<int> best_algorithm; // argmin absolute error, lowest index on ties

    std::size_t size() const { return values.size(); }
    std::size_t algo_count() const { return algorithm_ids.size(); }
};

PerformanceSpace build_space(const Dataset& data, const PredictionMatrix& preds, PerfMetric metric);

double distance(std::span<const double> u, std::span<const double> v, DistanceKind kind);

// Diagonal of the per-column min-max bounding box.
double bbox_diameter(const PerformanceSpace& space);

// Mean pairwise euclidean distance over a seeded pair sample, normalized by
// the bounding-box diameter. 0 for degenerate spaces, always in [0,1].
double dispersion(const PerformanceSpace& space, std::size_t sample_size, std::uint64_t seed);

// Seeded subsample of instances, preserving order of the chosen rows.
PerformanceSpace sample_space(const PerformanceSpace& space, std::size_t max_points, std::uint64_t seed);

void save_space(const PerformanceSpace& space, const std::string& path);

} // namespace apsel

#endif
