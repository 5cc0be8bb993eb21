#include "apsel/perfspace.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "apsel/rng.hpp"
#include "apsel/textio.hpp"

namespace apsel {

PerfMetric parse_metric(const std::string& name) {
    if (name == "mae") return PerfMetric::absolute_error;
    if (name == "rank") return PerfMetric::rank;
    if (name == "riip") return PerfMetric::riip;
    if (name == "riip-mpre") return PerfMetric::riip_mpre;
    throw std::invalid_argument("unknown metric '" + name + "' (expected mae|rank|riip|riip-mpre)");
}

std::string metric_name(PerfMetric metric) {
    switch (metric) {
        case PerfMetric::absolute_error: return "mae";
        case PerfMetric::rank: return "rank";
        case PerfMetric::riip: return "riip";
        case PerfMetric::riip_mpre: return "riip-mpre";
    }
    return "?";
}

DistanceKind parse_distance(const std::string& name) {
    if (name == "euclidean") return DistanceKind::euclidean;
    if (name == "cosine") return DistanceKind::cosine;
    throw std::invalid_argument("unknown distance '" + name + "' (expected euclidean|cosine)");
}

std::string distance_name(DistanceKind kind) {
    return kind == DistanceKind::euclidean ? "euclidean" : "cosine";
}

double absolute_error(double y, double yhat) {
    return std::fabs(y - yhat);
}

std::vector<int> rank_row(const std::vector<double>& errors) {
    if (errors.empty()) throw std::invalid_argument("rank_row: empty row");
    const std::size_t m = errors.size();
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return errors[a] < errors[b];
    });
    std::vector<int> ranks(m, 0);
    for (std::size_t pos = 0; pos < m; ++pos) {
        if (pos > 0 && errors[order[pos]] == errors[order[pos - 1]]) {
            ranks[order[pos]] = ranks[order[pos - 1]]; // ties share the minimum rank
        } else {
            ranks[order[pos]] = static_cast<int>(pos) + 1;
        }
    }
    return ranks;
}

double max_possible_error(double y, TargetBounds bounds) {
    bounds.validate();
    if (!bounds.contains(y)) {
        throw std::invalid_argument("max_possible_error: target " + format_double(y) + " out of bounds");
    }
    return std::max(y - bounds.lower, bounds.upper - y);
}

double relative_error(double y, double yhat, TargetBounds bounds) {
    return absolute_error(y, yhat) / max_possible_error(y, bounds);
}

std::vector<double> riip_row(const std::vector<double>& errors) {
    if (errors.empty()) throw std::invalid_argument("riip_row: empty row");
    double best = errors[0];
    for (double e : errors) {
        if (e < 0.0) throw std::invalid_argument("riip_row: negative error");
        best = std::min(best, e);
    }
    std::vector<double> out(errors.size());
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (errors[k] == 0.0) {
            out[k] = 1.0;
        } else if (best == 0.0) {
            out[k] = 0.0;
        } else {
            out[k] = best / errors[k];
        }
    }
    return out;
}

std::vector<double> riip_mpre_row(double y, const std::vector<double>& yhats, TargetBounds bounds) {
    std::vector<double> errors(yhats.size());
    for (std::size_t k = 0; k < yhats.size(); ++k) errors[k] = absolute_error(y, yhats[k]);
    std::vector<double> riip = riip_row(errors);
    const double max_err = max_possible_error(y, bounds);
    std::vector<double> out(yhats.size());
    for (std::size_t k = 0; k < yhats.size(); ++k) {
        out[k] = (1.0 - errors[k] / max_err) * riip[k];
    }
    return out;
}

std::vector<std::vector<double>> absolute_errors(const Dataset& data, const PredictionMatrix& preds) {
    if (preds.rows() != data.size()) throw std::invalid_argument("absolute_errors: misaligned inputs");
    std::vector<std::vector<double>> errors(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        errors[i].resize(preds.cols());
        for (std::size_t k = 0; k < preds.cols(); ++k) {
            errors[i][k] = absolute_error(data.instances[i].target, preds.values[i][k]);
        }
    }
    return errors;
}

static int argmin_index(const std::vector<double>& row) {
    int best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
        if (row[k] < row[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    }
    return best;
}

PerformanceSpace build_space(const Dataset& data, const PredictionMatrix& preds, PerfMetric metric) {
    if (preds.rows() != data.size()) throw std::invalid_argument("build_space: misaligned inputs");
    if (preds.cols() < 2) throw std::invalid_argument("build_space: at least 2 algorithms required");

    PerformanceSpace space;
    space.metric = metric;
    space.algorithm_ids = preds.algorithm_ids;
    space.values.resize(data.size());
    space.best_algorithm.resize(data.size());
    space.instance_ids.reserve(data.size());

    for (std::size_t i = 0; i < data.size(); ++i) {
        const Instance& ins = data.instances[i];
        space.instance_ids.push_back(ins.id);
        std::vector<double> errors(preds.cols());
        for (std::size_t k = 0; k < preds.cols(); ++k) {
            errors[k] = absolute_error(ins.target, preds.values[i][k]);
        }
        // Ground-truth label is always the absolute-error argmin.
        space.best_algorithm[i] = argmin_index(errors);

        switch (metric) {
            case PerfMetric::absolute_error:
                space.values[i] = std::move(errors);
                break;
            case PerfMetric::rank: {
                std::vector<int> ranks = rank_row(errors);
                space.values[i].assign(ranks.begin(), ranks.end());
                break;
            }
            case PerfMetric::riip:
                space.values[i] = riip_row(errors);
                break;
            case PerfMetric::riip_mpre:
                space.values[i] = riip_mpre_row(ins.target, preds.values[i], data.bounds);
                break;
        }
    }
    return space;
}

double distance(std::span<const double> u, std::span<const double> v, DistanceKind kind) {
    if (u.size() != v.size()) throw std::invalid_argument("distance: length mismatch");
    if (kind == DistanceKind::euclidean) {
        double sum = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            double d = u[i] - v[i];
            sum += d * d;
        }
        return std::sqrt(sum);
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) {
        throw std::invalid_argument("cosine distance undefined for zero vector");
    }
    return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

double bbox_diameter(const PerformanceSpace& space) {
    if (space.size() == 0) return 0.0;
    const std::size_t m = space.algo_count();
    std::vector<double> lo(space.values[0]);
    std::vector<double> hi(space.values[0]);
    for (const auto& row : space.values) {
        for (std::size_t k = 0; k < m; ++k) {
            lo[k] = std::min(lo[k], row[k]);
            hi[k] = std::max(hi[k], row[k]);
        }
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        double d = hi[k] - lo[k];
        sum += d * d;
    }
    return std::sqrt(sum);
}

double dispersion(const PerformanceSpace& space, std::size_t sample_size, std::uint64_t seed) {
    if (space.size() == 0) throw std::invalid_argument("dispersion: empty space");
    if (space.size() == 1) return 0.0;
    const double diameter = bbox_diameter(space);
    if (diameter == 0.0) return 0.0;

    Rng rng(seed);
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t s = 0; s < sample_size; ++s) {
        std::size_t i = rng.index(space.size());
        std::size_t j = rng.index(space.size() - 1);
        if (j >= i) ++j; // distinct pair
        total += distance(space.values[i], space.values[j], DistanceKind::euclidean);
        ++pairs;
    }
    return pairs == 0 ? 0.0 : (total / static_cast<double>(pairs)) / diameter;
}

PerformanceSpace sample_space(const PerformanceSpace& space, std::size_t max_points, std::uint64_t seed) {
    if (space.size() <= max_points) return space;
    std::vector<std::size_t> order(space.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    order.resize(max_points);
    std::sort(order.begin(), order.end());

    PerformanceSpace out;
    out.metric = space.metric;
    out.algorithm_ids = space.algorithm_ids;
    for (std::size_t i : order) {
        out.instance_ids.push_back(space.instance_ids[i]);
        out.values.push_back(space.values[i]);
        out.best_algorithm.push_back(space.best_algorithm[i]);
    }
    return out;
}

void save_space(const PerformanceSpace& space, const std::string& path) {
    std::ostringstream out;
    std::vector<std::string> header;
    header.push_back("id");
    header.push_back("best");
    header.insert(header.end(), space.algorithm_ids.begin(), space.algorithm_ids.end());
    out << join_csv(header) << "\n";
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::vector<std::string> cells;
        cells.push_back(space.instance_ids[i]);
        cells.push_back(space.algorithm_ids[static_cast<std::size_t>(space.best_algorithm[i])]);
        for (double v : space.values[i]) cells.push_back(format_double(v));
        out << join_csv(cells) << "\n";
    }
    write_text_file(path, out.str());
}

} // namespace apsel
