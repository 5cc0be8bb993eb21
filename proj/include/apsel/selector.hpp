#ifndef APSEL_SELECTOR_HPP
#define APSEL_SELECTOR_HPP

#include <string>
#include <utility>
#include <vector>

#include "apsel/dataset.hpp"
#include "apsel/perfspace.hpp"
#include "apsel/siamese.hpp"

namespace apsel {

enum class Aggregation { mean_perf, majority_vote };

Aggregation parse_aggregation(const std::string& name);
std::string aggregation_name(Aggregation a);

// Trained embedding plus the labelled reference set it retrieves from.
struct SelectorModel {
    EmbeddingModel embedding;
    std::vector<std::string> reference_ids;
    std::vector<std::vector<double>> reference_embeddings;
    std::vector<int> reference_best;
    PerformanceSpace reference_perf; // riip-mpre space of the labelled set
    std::size_t k = 5;
    double alpha = 0.2;
    DistanceKind distance_kind = DistanceKind::euclidean;
    Aggregation aggregation = Aggregation::mean_perf;
    int fallback = 0; // train-set single best

    void save(const std::string& path) const;
    static SelectorModel load(const std::string& path);
};

SelectorModel fit_selector(const EmbeddingModel& model, const Dataset& labelled,
                           const PredictionMatrix& preds, std::size_t k, double alpha,
                           DistanceKind distance_kind, Aggregation aggregation = Aggregation::mean_perf);

struct SelectionOutcome {
    int chosen = 0;
    std::vector<std::pair<std::string, double>> neighbors_used; // (id, distance)
    bool used_fallback = false;
};

SelectionOutcome select(const SelectorModel& selector, const std::vector<double>& features);
std::vector<SelectionOutcome> select_batch(const SelectorModel& selector, const Dataset& data);

void save_selections(const std::vector<SelectionOutcome>& outcomes, const Dataset& data,
                     const std::vector<std::string>& algorithm_ids, const std::string& path);

} // namespace apsel

#endif
