#include "apsel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "apsel/rng.hpp"
#include "apsel/textio.hpp"

#include "json.hpp"

namespace apsel {

int single_best(const ErrorMatrix& train_errors) {
    if (train_errors.empty()) throw std::invalid_argument("single_best: empty error matrix");
    const std::size_t m = train_errors[0].size();
    int best = 0;
    double best_mean = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        double sum = 0.0;
        for (const auto& row : train_errors) sum += row[k];
        double mean = sum / static_cast<double>(train_errors.size());
        if (k == 0 || mean < best_mean) {
            best_mean = mean;
            best = static_cast<int>(k);
        }
    }
    return best;
}

double virtual_best_mae(const ErrorMatrix& test_errors) {
    if (test_errors.empty()) throw std::invalid_argument("virtual_best_mae: empty error matrix");
    double sum = 0.0;
    for (const auto& row : test_errors) {
        sum += *std::min_element(row.begin(), row.end());
    }
    return sum / static_cast<double>(test_errors.size());
}

std::vector<int> feature_knn_baseline(const Dataset& train, const PerformanceSpace& train_riip_mpre,
                                      const Dataset& test, std::size_t k) {
    if (train.size() == 0) throw std::invalid_argument("feature_knn_baseline: empty train set");
    if (train_riip_mpre.size() != train.size()) {
        throw std::invalid_argument("feature_knn_baseline: space not aligned to train set");
    }
    if (k == 0) throw std::invalid_argument("feature_knn_baseline: k must be positive");
    k = std::min(k, train.size());

    const std::size_t d = train.feature_dim();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (const Instance& ins : train.instances) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += ins.features[j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(train.size());
    for (const Instance& ins : train.instances) {
        for (std::size_t j = 0; j < d; ++j) {
            double diff = ins.features[j] - mean[j];
            sd[j] += diff * diff;
        }
    }
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(sd[j] / static_cast<double>(train.size()));

    auto zscore = [&](const std::vector<double>& f) {
        std::vector<double> z(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            if (sd[j] > 0.0) z[j] = (f[j] - mean[j]) / sd[j];
        }
        return z;
    };

    std::vector<std::vector<double>> train_z;
    train_z.reserve(train.size());
    for (const Instance& ins : train.instances) train_z.push_back(zscore(ins.features));

    const std::size_t m = train_riip_mpre.algo_count();
    std::vector<int> out;
    out.reserve(test.size());
    for (const Instance& q : test.instances) {
        std::vector<double> qz = zscore(q.features);
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = qz[j] - train_z[i][j];
                s += diff * diff;
            }
            dist.emplace_back(s, i);
        }
        std::sort(dist.begin(), dist.end());

        std::vector<double> perf(m, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            const auto& row = train_riip_mpre.values[dist[i].second];
            for (std::size_t c = 0; c < m; ++c) perf[c] += row[c];
        }
        int best = 0;
        for (std::size_t c = 1; c < m; ++c) {
            if (perf[c] > perf[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
        }
        out.push_back(best);
    }
    return out;
}

std::vector<int> random_choices(std::size_t count, std::size_t algo_count, std::uint64_t seed) {
    if (algo_count == 0) throw std::invalid_argument("random_choices: no algorithms");
    Rng rng(seed);
    std::vector<int> out(count);
    for (auto& c : out) c = static_cast<int>(rng.index(algo_count));
    return out;
}

std::vector<EvalRecord> evaluate(const std::vector<MethodChoices>& methods,
                                 const ErrorMatrix& test_errors, const ErrorMatrix& train_errors) {
    if (test_errors.empty()) throw std::invalid_argument("evaluate: empty test errors");
    const std::size_t n = test_errors.size();
    const std::size_t m = test_errors[0].size();

    const int sbs = single_best(train_errors);
    double sbs_mae = 0.0;
    for (const auto& row : test_errors) sbs_mae += row[static_cast<std::size_t>(sbs)];
    sbs_mae /= static_cast<double>(n);
    const double vbs_mae = virtual_best_mae(test_errors);

    std::vector<int> oracle(n);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        for (std::size_t k = 1; k < m; ++k) {
            if (test_errors[i][k] < test_errors[i][static_cast<std::size_t>(best)]) {
                best = static_cast<int>(k);
            }
        }
        oracle[i] = best;
    }

    std::vector<EvalRecord> records;
    for (const MethodChoices& method : methods) {
        if (method.chosen.size() != n) {
            throw std::invalid_argument("evaluate: method '" + method.name +
                                        "' does not cover every test instance");
        }
        EvalRecord rec;
        rec.method = method.name;
        double sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            int c = method.chosen[i];
            if (c < 0 || static_cast<std::size_t>(c) >= m) {
                throw std::invalid_argument("evaluate: method '" + method.name +
                                            "' chose an out-of-range algorithm");
            }
            sum += test_errors[i][static_cast<std::size_t>(c)];
            if (c == oracle[i]) ++correct;
        }
        rec.deployed_mae = sum / static_cast<double>(n);
        rec.selection_accuracy = static_cast<double>(correct) / static_cast<double>(n);

        if (rec.deployed_mae < vbs_mae - 1e-12) {
            throw std::logic_error("evaluate: method '" + method.name +
                                   "' beat the virtual best; oracle dominance violated");
        }
        rec.regret = std::max(0.0, rec.deployed_mae - vbs_mae);

        if (sbs_mae - vbs_mae > 1e-12) {
            double gap = (sbs_mae - rec.deployed_mae) / (sbs_mae - vbs_mae);
            if (gap > 1.0 + 1e-12) {
                throw std::logic_error("evaluate: method '" + method.name + "' gap_closed > 1");
            }
            rec.gap_closed = std::min(1.0, gap);
        }

        if (!method.used_fallback.empty()) {
            if (method.used_fallback.size() != n) {
                throw std::invalid_argument("evaluate: method '" + method.name +
                                            "' fallback flags not aligned");
            }
            std::size_t fb = 0;
            for (bool b : method.used_fallback) fb += b ? 1 : 0;
            rec.fallback_rate = static_cast<double>(fb) / static_cast<double>(n);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void save_report(const std::vector<EvalRecord>& records, const std::string& path) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const EvalRecord& rec : records) {
        nlohmann::ordered_json j;
        j["method"] = rec.method;
        j["deployed_mae"] = rec.deployed_mae;
        j["selection_accuracy"] = rec.selection_accuracy;
        j["regret"] = rec.regret;
        if (rec.gap_closed) {
            j["gap_closed"] = *rec.gap_closed;
        } else {
            j["gap_closed"] = nullptr;
        }
        j["fallback_rate"] = rec.fallback_rate;
        arr.push_back(std::move(j));
    }
    write_text_file(path, arr.dump(2) + "\n");
}

namespace {

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;
};

AxisRange column_range(const PerformanceSpace& space, std::size_t col) {
    if (space.metric == PerfMetric::riip || space.metric == PerfMetric::riip_mpre) {
        return {0.0, 1.0};
    }
    AxisRange r;
    if (space.size() == 0) return {0.0, 1.0};
    r.lo = r.hi = space.values[0][col];
    for (const auto& row : space.values) {
        r.lo = std::min(r.lo, row[col]);
        r.hi = std::max(r.hi, row[col]);
    }
    if (r.lo == r.hi) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

std::string svg_scatter(const PerformanceSpace& space, std::size_t ax, std::size_t ay) {
    const double width = 520, height = 520;
    const double left = 70, right = 20, top = 20, bottom = 60;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    AxisRange rx = column_range(space, ax);
    AxisRange ry = column_range(space, ay);
    auto sx = [&](double v) { return left + (v - rx.lo) / (rx.hi - rx.lo) * plot_w; };
    auto sy = [&](double v) { return top + plot_h - (v - ry.lo) / (ry.hi - ry.lo) * plot_h; };

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    // axes
    out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n";

    const int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        double fx = rx.lo + (rx.hi - rx.lo) * t / ticks;
        double fy = ry.lo + (ry.hi - ry.lo) * t / ticks;
        double px = sx(fx);
        double py = sy(fy);
        out << "<line x1=\"" << px << "\" y1=\"" << top + plot_h << "\" x2=\"" << px << "\" y2=\""
            << top + plot_h + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << px << "\" y=\"" << top + plot_h + 18
            << "\" font-size=\"10\" text-anchor=\"middle\">" << format_double(fx) << "</text>\n";
        out << "<line x1=\"" << left - 5 << "\" y1=\"" << py << "\" x2=\"" << left << "\" y2=\""
            << py << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << left - 8 << "\" y=\"" << py + 3
            << "\" font-size=\"10\" text-anchor=\"end\">" << format_double(fy) << "</text>\n";
    }

    const std::string metric = metric_name(space.metric);
    out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15
        << "\" font-size=\"12\" text-anchor=\"middle\">" << space.algorithm_ids[ax] << " (" << metric
        << ")</text>\n";
    out << "<text x=\"15\" y=\"" << top + plot_h / 2
        << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << top + plot_h / 2
        << ")\">" << space.algorithm_ids[ay] << " (" << metric << ")</text>\n";

    for (const auto& row : space.values) {
        out << "<circle cx=\"" << sx(row[ax]) << "\" cy=\"" << sy(row[ay])
            << "\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.5\"/>\n";
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace

std::vector<std::string> emit_scatter(const PerformanceSpace& space, const std::string& out_dir) {
    if (space.algo_count() < 2) throw std::invalid_argument("emit_scatter: need at least 2 algorithms");
    std::filesystem::create_directories(out_dir);

    std::vector<std::string> written;
    for (std::size_t a = 0; a < space.algo_count(); ++a) {
        for (std::size_t b = a + 1; b < space.algo_count(); ++b) {
            std::string path = out_dir + "/scatter_" + space.algorithm_ids[a] + "_" +
                               space.algorithm_ids[b] + ".svg";
            write_text_file(path, svg_scatter(space, a, b));
            written.push_back(path);
        }
    }

    std::ostringstream csv;
    std::vector<std::string> header;
    header.push_back("id");
    header.insert(header.end(), space.algorithm_ids.begin(), space.algorithm_ids.end());
    csv << join_csv(header) << "\n";
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::vector<std::string> cells;
        cells.push_back(space.instance_ids[i]);
        for (double v : space.values[i]) cells.push_back(format_double(v));
        csv << join_csv(cells) << "\n";
    }
    std::string coords = out_dir + "/scatter_coords.csv";
    write_text_file(coords, csv.str());
    written.push_back(coords);
    return written;
}

} // namespace apsel
