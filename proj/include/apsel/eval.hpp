#ifndef APSEL_EVAL_HPP
#define APSEL_EVAL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apsel/dataset.hpp"
#include "apsel/perfspace.hpp"

namespace apsel {

using ErrorMatrix = std::vector<std::vector<double>>; // n x m absolute errors

// Train-set single best: argmin of mean absolute error, lowest index on ties.
int single_best(const ErrorMatrix& train_errors);

// Oracle that picks the per-instance best algorithm everywhere.
double virtual_best_mae(const ErrorMatrix& test_errors);

// Raw-feature nearest neighbors (z-scored on the train split); choice is the
// argmax of the neighbors' mean riip-mpre.
std::vector<int> feature_knn_baseline(const Dataset& train, const PerformanceSpace& train_riip_mpre,
                                      const Dataset& test, std::size_t k);

std::vector<int> random_choices(std::size_t count, std::size_t algo_count, std::uint64_t seed);

struct MethodChoices {
    std::string name;
    std::vector<int> chosen;          // per test instance
    std::vector<bool> used_fallback;  // may be empty when not applicable
};

struct EvalRecord {
    std::string method;
    double deployed_mae = 0.0;
    double selection_accuracy = 0.0;
    double regret = 0.0;
    std::optional<double> gap_closed; // null when SBS == VBS
    double fallback_rate = 0.0;
};

// Scores every method against the test errors; SBS is taken from the train
// errors. Enforces the oracle-dominance invariants and throws on violation.
std::vector<EvalRecord> evaluate(const std::vector<MethodChoices>& methods,
                                 const ErrorMatrix& test_errors, const ErrorMatrix& train_errors);

void save_report(const std::vector<EvalRecord>& records, const std::string& path);

// One SVG per unordered algorithm pair plus a CSV of the plotted coordinates.
// Returns the paths written.
std::vector<std::string> emit_scatter(const PerformanceSpace& space, const std::string& out_dir);

} // namespace apsel

#endif
