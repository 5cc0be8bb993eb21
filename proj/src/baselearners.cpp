#include "apsel/baselearners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace apsel {

LearnerKind parse_learner_kind(const std::string& name) {
    if (name == "mean") return LearnerKind::mean;
    if (name == "linear") return LearnerKind::linear;
    if (name == "knn") return LearnerKind::knn;
    if (name == "stump") return LearnerKind::stump;
    throw std::invalid_argument("unknown learner '" + name + "' (expected mean|linear|knn|stump)");
}

std::string learner_name(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::mean: return "mean";
        case LearnerKind::linear: return "linear";
        case LearnerKind::knn: return "knn";
        case LearnerKind::stump: return "stump";
    }
    return "?";
}

// Solve (A + damping*I) x = b in place via Gaussian elimination with
// partial pivoting. A is square, row-major.
static std::vector<double> solve_damped(std::vector<std::vector<double>> a,
                                        std::vector<double> b, double damping) {
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) a[i][i] += damping;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        if (a[col][col] == 0.0) {
            throw std::runtime_error("linear fit: singular normal equations even after damping");
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return x;
}

static void fit_linear(const Dataset& train, std::vector<double>& weights, double& intercept) {
    const std::size_t n = train.size();
    const std::size_t d = train.feature_dim();
    if (n < d + 1) {
        throw std::runtime_error("linear fit: need at least feature_dim+1 instances, got " +
                                 std::to_string(n));
    }
    // Normal equations on the design matrix augmented with a 1s column.
    const std::size_t p = d + 1;
    std::vector<std::vector<double>> ata(p, std::vector<double>(p, 0.0));
    std::vector<double> atb(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = train.instances[i].features;
        for (std::size_t r = 0; r < p; ++r) {
            double xr = r < d ? f[r] : 1.0;
            for (std::size_t c = r; c < p; ++c) {
                double xc = c < d ? f[c] : 1.0;
                ata[r][c] += xr * xc;
            }
            atb[r] += xr * train.instances[i].target;
        }
    }
    for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < r; ++c) ata[r][c] = ata[c][r];
    }
    std::vector<double> x = solve_damped(std::move(ata), std::move(atb), 1e-8);
    weights.assign(x.begin(), x.begin() + static_cast<long>(d));
    intercept = x[d];
}

static void fit_stump(const Dataset& train, std::size_t& feature,
                      double& threshold, double& left, double& right) {
    const std::size_t n = train.size();
    const std::size_t d = train.feature_dim();
    double best_sse = std::numeric_limits<double>::infinity();
    bool found = false;

    double total = 0.0;
    for (const auto& ins : train.instances) total += ins.target;

    for (std::size_t f = 0; f < d; ++f) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return train.instances[a].features[f] < train.instances[b].features[f];
        });

        double left_sum = 0.0, left_sq = 0.0;
        double right_sum = total;
        double right_sq = 0.0;
        for (const auto& ins : train.instances) right_sq += ins.target * ins.target;

        for (std::size_t pos = 0; pos + 1 < n; ++pos) {
            double t = train.instances[order[pos]].target;
            left_sum += t;
            left_sq += t * t;
            right_sum -= t;
            right_sq -= t * t;

            double v = train.instances[order[pos]].features[f];
            double v_next = train.instances[order[pos + 1]].features[f];
            if (v == v_next) continue; // no split between equal values

            double nl = static_cast<double>(pos + 1);
            double nr = static_cast<double>(n - pos - 1);
            double sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
            if (sse < best_sse - 1e-12) {
                best_sse = sse;
                feature = f;
                threshold = 0.5 * (v + v_next);
                left = left_sum / nl;
                right = right_sum / nr;
                found = true;
            }
        }
    }
    if (!found) {
        // All feature columns constant: degenerate stump predicts the mean.
        feature = 0;
        threshold = std::numeric_limits<double>::infinity();
        left = total / static_cast<double>(n);
        right = left;
    }
}

BaseLearner BaseLearner::fit(LearnerKind kind, const Dataset& train, std::size_t knn_k) {
    if (train.size() == 0) throw std::invalid_argument("fit: empty training set");
    BaseLearner l;
    l.kind_ = kind;
    l.feature_dim_ = train.feature_dim();

    switch (kind) {
        case LearnerKind::mean: {
            double sum = 0.0;
            for (const auto& ins : train.instances) sum += ins.target;
            l.mean_ = sum / static_cast<double>(train.size());
            break;
        }
        case LearnerKind::linear:
            fit_linear(train, l.weights_, l.intercept_);
            break;
        case LearnerKind::knn: {
            if (knn_k == 0) throw std::invalid_argument("fit: knn k must be positive");
            l.knn_k_ = std::min(knn_k, train.size());
            for (const auto& ins : train.instances) {
                l.train_features_.push_back(ins.features);
                l.train_targets_.push_back(ins.target);
            }
            break;
        }
        case LearnerKind::stump:
            fit_stump(train, l.stump_feature_, l.stump_threshold_, l.stump_left_, l.stump_right_);
            break;
    }
    return l;
}

double BaseLearner::predict(const std::vector<double>& features) const {
    if (features.size() != feature_dim_) {
        throw std::invalid_argument("predict: feature dimension mismatch (got " +
                                    std::to_string(features.size()) + ", fitted on " +
                                    std::to_string(feature_dim_) + ")");
    }
    switch (kind_) {
        case LearnerKind::mean:
            return mean_;
        case LearnerKind::linear: {
            double v = intercept_;
            for (std::size_t i = 0; i < weights_.size(); ++i) v += weights_[i] * features[i];
            return v;
        }
        case LearnerKind::knn: {
            // k nearest by squared distance, ties broken by training order.
            std::vector<std::pair<double, std::size_t>> dist;
            dist.reserve(train_features_.size());
            for (std::size_t i = 0; i < train_features_.size(); ++i) {
                double s = 0.0;
                for (std::size_t d = 0; d < features.size(); ++d) {
                    double diff = features[d] - train_features_[i][d];
                    s += diff * diff;
                }
                dist.emplace_back(s, i);
            }
            std::sort(dist.begin(), dist.end());
            double sum = 0.0;
            for (std::size_t i = 0; i < knn_k_; ++i) sum += train_targets_[dist[i].second];
            return sum / static_cast<double>(knn_k_);
        }
        case LearnerKind::stump:
            return features[stump_feature_] <= stump_threshold_ ? stump_left_ : stump_right_;
    }
    return 0.0;
}

PredictionMatrix predict_all(const std::vector<BaseLearner>& learners, const Dataset& data) {
    if (learners.empty()) throw std::invalid_argument("predict_all: no learners");
    PredictionMatrix m;
    for (const auto& l : learners) m.algorithm_ids.push_back(l.name());
    m.values.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        m.values[i].resize(learners.size());
        for (std::size_t k = 0; k < learners.size(); ++k) {
            m.values[i][k] = data.bounds.clamp(learners[k].predict(data.instances[i].features));
        }
    }
    return m;
}

} // namespace apsel
