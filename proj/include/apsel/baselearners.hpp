#ifndef APSEL_BASELEARNERS_HPP
#define APSEL_BASELEARNERS_HPP

#include <string>
#include <vector>

#include "apsel/dataset.hpp"

namespace apsel {

enum class LearnerKind { mean, linear, knn, stump };

LearnerKind parse_learner_kind(const std::string& name);
std::string learner_name(LearnerKind kind);

// Deliberately heterogeneous pool: global constant, global linear, local
// memorizer, axis-aligned split. Per-instance selection is only interesting
// when algorithms win in different regions.
class BaseLearner {
  public:
    static BaseLearner fit(LearnerKind kind, const Dataset& train, std::size_t knn_k = 5);

    double predict(const std::vector<double>& features) const;

    LearnerKind kind() const { return kind_; }
    std::string name() const { return learner_name(kind_); }

    // Fitted parameters, exposed for tests.
    double mean_value() const { return mean_; }
    const std::vector<double>& linear_weights() const { return weights_; }
    double linear_intercept() const { return intercept_; }
    std::size_t stump_feature() const { return stump_feature_; }
    double stump_threshold() const { return stump_threshold_; }
    double stump_left() const { return stump_left_; }
    double stump_right() const { return stump_right_; }

  private:
    LearnerKind kind_ = LearnerKind::mean;
    std::size_t feature_dim_ = 0;

    double mean_ = 0.0;

    std::vector<double> weights_;
    double intercept_ = 0.0;

    std::vector<std::vector<double>> train_features_;
    std::vector<double> train_targets_;
    std::size_t knn_k_ = 5;

    std::size_t stump_feature_ = 0;
    double stump_threshold_ = 0.0;
    double stump_left_ = 0.0;
    double stump_right_ = 0.0;
};

// Predictions for every instance, clamped into the dataset bounds.
PredictionMatrix predict_all(const std::vector<BaseLearner>& learners, const Dataset& data);

} // namespace apsel

#endif
