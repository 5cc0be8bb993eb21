#include "apsel/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "apsel/rng.hpp"
#include "apsel/textio.hpp"

#include "json.hpp"

namespace apsel {

void TargetBounds::validate() const {
    if (!(lower < upper)) {
        throw std::invalid_argument("target bounds: lower (" + format_double(lower) +
                                    ") must be < upper (" + format_double(upper) + ")");
    }
}

double TargetBounds::clamp(double v) const {
    return std::min(upper, std::max(lower, v));
}

void Dataset::validate() const {
    bounds.validate();
    std::set<std::string> seen;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const Instance& ins = instances[i];
        if (!seen.insert(ins.id).second) {
            throw std::runtime_error("dataset: duplicate instance id '" + ins.id + "'");
        }
        if (ins.features.size() != feature_names.size()) {
            throw std::runtime_error("dataset: instance '" + ins.id + "' has " +
                                     std::to_string(ins.features.size()) + " features, expected " +
                                     std::to_string(feature_names.size()));
        }
        if (!bounds.contains(ins.target)) {
            throw std::runtime_error("dataset: instance '" + ins.id + "' target " +
                                     format_double(ins.target) + " outside bounds [" +
                                     format_double(bounds.lower) + ", " + format_double(bounds.upper) + "]");
        }
    }
}

std::unordered_map<std::string, std::size_t> id_index(const Dataset& data) {
    std::unordered_map<std::string, std::size_t> map;
    map.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) map[data.instances[i].id] = i;
    return map;
}

void SyntheticSpec::validate() const {
    bounds.validate();
    if (persona_count == 0) throw std::invalid_argument("synthetic spec: persona_count must be positive");
    if (instances_per_persona == 0) throw std::invalid_argument("synthetic spec: instances_per_persona must be positive");
    if (feature_dim == 0) throw std::invalid_argument("synthetic spec: feature_dim must be positive");
    if (modes_per_persona == 0) throw std::invalid_argument("synthetic spec: modes_per_persona must be positive");
    if (algorithm_count < 2) throw std::invalid_argument("synthetic spec: algorithm_count must be >= 2");
    if (error_profiles.size() != persona_count) {
        throw std::invalid_argument("synthetic spec: error_profiles must have one entry per persona");
    }
    for (std::size_t p = 0; p < error_profiles.size(); ++p) {
        if (error_profiles[p].size() != algorithm_count) {
            throw std::invalid_argument("synthetic spec: error_profiles[" + std::to_string(p) +
                                        "] must have one scale per algorithm");
        }
        for (double s : error_profiles[p]) {
            if (!(s >= 0.0)) throw std::invalid_argument("synthetic spec: noise scales must be >= 0");
        }
    }
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("synthetic spec " + path + ": " + e.what());
    }
    static const std::set<std::string> known = {
        "persona_count", "instances_per_persona", "feature_dim", "modes_per_persona",
        "algorithm_count", "error_profiles", "bounds", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw std::runtime_error("synthetic spec: unknown key '" + it.key() + "'");
        }
    }
    SyntheticSpec spec;
    try {
        spec.persona_count = j.at("persona_count").get<std::size_t>();
        spec.instances_per_persona = j.at("instances_per_persona").get<std::size_t>();
        spec.feature_dim = j.at("feature_dim").get<std::size_t>();
        spec.modes_per_persona = j.at("modes_per_persona").get<std::size_t>();
        spec.algorithm_count = j.at("algorithm_count").get<std::size_t>();
        spec.error_profiles = j.at("error_profiles").get<std::vector<std::vector<double>>>();
        spec.bounds.lower = j.at("bounds").at(0).get<double>();
        spec.bounds.upper = j.at("bounds").at(1).get<double>();
        spec.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("synthetic spec " + path + ": " + e.what());
    }
    spec.validate();
    return spec;
}

void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path) {
    nlohmann::ordered_json j;
    j["persona_count"] = spec.persona_count;
    j["instances_per_persona"] = spec.instances_per_persona;
    j["feature_dim"] = spec.feature_dim;
    j["modes_per_persona"] = spec.modes_per_persona;
    j["algorithm_count"] = spec.algorithm_count;
    j["error_profiles"] = spec.error_profiles;
    j["bounds"] = {spec.bounds.lower, spec.bounds.upper};
    j["seed"] = spec.seed;
    write_text_file(path, j.dump(2) + "\n");
}

Dataset load_dataset(const std::string& path, TargetBounds bounds) {
    bounds.validate();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("dataset " + path + ": empty file");
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3 || header.front() != "id" || header.back() != "target") {
        throw std::runtime_error("dataset " + path + ": header must be id,<feature...>,target");
    }

    Dataset data;
    data.bounds = bounds;
    data.feature_names.assign(header.begin() + 1, header.end() - 1);

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw std::runtime_error("dataset " + path + " row " + std::to_string(row) + ": expected " +
                                     std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        }
        Instance ins;
        ins.id = cells.front();
        for (std::size_t c = 1; c + 1 < cells.size(); ++c) {
            ins.features.push_back(parse_double(
                cells[c], path + " row " + std::to_string(row) + " column " + header[c]));
        }
        ins.target = parse_double(cells.back(), path + " row " + std::to_string(row) + " target");
        if (!bounds.contains(ins.target)) {
            throw std::runtime_error("dataset " + path + " row " + std::to_string(row) + ": target " +
                                     format_double(ins.target) + " outside bounds [" +
                                     format_double(bounds.lower) + ", " + format_double(bounds.upper) + "]");
        }
        data.instances.push_back(std::move(ins));
    }
    data.validate();
    return data;
}

PredictionMatrix load_predictions(const std::string& path, const Dataset& dataset) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open predictions: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("predictions " + path + ": empty file");
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header.front() != "id") {
        throw std::runtime_error("predictions " + path + ": header must be id,<algorithm...>");
    }
    if (header.size() - 1 < 2) {
        throw std::runtime_error("predictions " + path + ": at least 2 algorithms required");
    }

    PredictionMatrix m;
    m.algorithm_ids.assign(header.begin() + 1, header.end());

    std::unordered_map<std::string, std::vector<double>> by_id;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw std::runtime_error("predictions " + path + " row " + std::to_string(row) +
                                     ": expected " + std::to_string(header.size()) + " cells");
        }
        std::vector<double> vals;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            vals.push_back(parse_double(
                cells[c], path + " row " + std::to_string(row) + " column " + header[c]));
        }
        if (!by_id.emplace(cells.front(), std::move(vals)).second) {
            throw std::runtime_error("predictions " + path + ": duplicate id '" + cells.front() + "'");
        }
    }

    // Align rows to dataset order; every dataset id must be present.
    for (const Instance& ins : dataset.instances) {
        auto it = by_id.find(ins.id);
        if (it == by_id.end()) {
            throw std::runtime_error("predictions " + path + ": missing instance id '" + ins.id + "'");
        }
        m.values.push_back(std::move(it->second));
        by_id.erase(it);
    }
    if (!by_id.empty()) {
        throw std::runtime_error("predictions " + path + ": unknown instance id '" +
                                 by_id.begin()->first + "'");
    }
    return m;
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::ostringstream out;
    std::vector<std::string> header;
    header.push_back("id");
    header.insert(header.end(), data.feature_names.begin(), data.feature_names.end());
    header.push_back("target");
    out << join_csv(header) << "\n";
    for (const Instance& ins : data.instances) {
        std::vector<std::string> cells;
        cells.push_back(ins.id);
        for (double f : ins.features) cells.push_back(format_double(f));
        cells.push_back(format_double(ins.target));
        out << join_csv(cells) << "\n";
    }
    write_text_file(path, out.str());
}

void save_predictions(const PredictionMatrix& preds, const Dataset& data, const std::string& path) {
    if (preds.rows() != data.size()) {
        throw std::runtime_error("save_predictions: row count mismatch");
    }
    std::ostringstream out;
    std::vector<std::string> header;
    header.push_back("id");
    header.insert(header.end(), preds.algorithm_ids.begin(), preds.algorithm_ids.end());
    out << join_csv(header) << "\n";
    for (std::size_t i = 0; i < preds.rows(); ++i) {
        std::vector<std::string> cells;
        cells.push_back(data.instances[i].id);
        for (double v : preds.values[i]) cells.push_back(format_double(v));
        out << join_csv(cells) << "\n";
    }
    write_text_file(path, out.str());
}

void save_personas(const std::vector<int>& labels, const Dataset& data, const std::string& path) {
    if (labels.size() != data.size()) throw std::runtime_error("save_personas: label count mismatch");
    std::ostringstream out;
    out << "id,persona\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << data.instances[i].id << ',' << labels[i] << "\n";
    }
    write_text_file(path, out.str());
}

std::vector<int> load_personas(const std::string& path, const Dataset& data) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open personas: " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"id", "persona"}) {
        throw std::runtime_error("personas " + path + ": header must be id,persona");
    }
    std::unordered_map<std::string, int> by_id;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 2) throw std::runtime_error("personas " + path + ": malformed row");
        by_id[cells[0]] = static_cast<int>(parse_double(cells[1], path + " persona"));
    }
    std::vector<int> labels;
    for (const Instance& ins : data.instances) {
        auto it = by_id.find(ins.id);
        if (it == by_id.end()) throw std::runtime_error("personas " + path + ": missing id '" + ins.id + "'");
        labels.push_back(it->second);
    }
    return labels;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double train_fraction, double test_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0) || !(test_fraction > 0.0)) {
        throw std::invalid_argument("split: fractions must be positive");
    }
    if (std::fabs(train_fraction + test_fraction - 1.0) > 1e-9) {
        throw std::invalid_argument("split: fractions must sum to 1");
    }
    std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n) {
        throw std::runtime_error("split: would leave an empty side (n=" + std::to_string(n) + ")");
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<long>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<long>(n_train), order.end());
    return {std::move(train), std::move(test)};
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.bounds = data.bounds;
    out.feature_names = data.feature_names;
    out.instances.reserve(indices.size());
    for (std::size_t i : indices) out.instances.push_back(data.instances[i]);
    return out;
}

SplitResult split(const Dataset& data, const PredictionMatrix& preds,
                  double train_fraction, double test_fraction, std::uint64_t seed) {
    if (preds.rows() != data.size()) throw std::invalid_argument("split: predictions not aligned to dataset");
    auto [train_idx, test_idx] = split_indices(data.size(), train_fraction, test_fraction, seed);

    SplitResult out;
    out.train_data = subset(data, train_idx);
    out.test_data = subset(data, test_idx);
    out.train_preds.algorithm_ids = preds.algorithm_ids;
    out.test_preds.algorithm_ids = preds.algorithm_ids;
    for (std::size_t i : train_idx) out.train_preds.values.push_back(preds.values[i]);
    for (std::size_t i : test_idx) out.test_preds.values.push_back(preds.values[i]);
    out.train_indices = std::move(train_idx);
    out.test_indices = std::move(test_idx);
    return out;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();

    Rng center_rng(Rng::mix(spec.seed, 1));
    Rng data_rng(Rng::mix(spec.seed, 2));

    // One set of Gaussian feature modes per persona; a persona deliberately
    // spans several feature clusters so feature proximity does not imply
    // performance proximity.
    std::vector<std::vector<std::vector<double>>> centers(spec.persona_count);
    for (std::size_t p = 0; p < spec.persona_count; ++p) {
        centers[p].resize(spec.modes_per_persona);
        for (std::size_t m = 0; m < spec.modes_per_persona; ++m) {
            centers[p][m].resize(spec.feature_dim);
            for (std::size_t d = 0; d < spec.feature_dim; ++d) {
                centers[p][m][d] = center_rng.uniform(-5.0, 5.0);
            }
        }
    }

    SyntheticData out;
    out.dataset.bounds = spec.bounds;
    for (std::size_t d = 0; d < spec.feature_dim; ++d) {
        out.dataset.feature_names.push_back("f" + std::to_string(d + 1));
    }
    for (std::size_t k = 0; k < spec.algorithm_count; ++k) {
        out.predictions.algorithm_ids.push_back("a" + std::to_string(k + 1));
    }

    for (std::size_t p = 0; p < spec.persona_count; ++p) {
        for (std::size_t i = 0; i < spec.instances_per_persona; ++i) {
            const std::vector<double>& center = centers[p][i % spec.modes_per_persona];
            Instance ins;
            ins.id = "p" + std::to_string(p) + "_" + std::to_string(i);
            ins.features.resize(spec.feature_dim);
            for (std::size_t d = 0; d < spec.feature_dim; ++d) {
                ins.features[d] = center[d] + data_rng.normal();
            }
            ins.target = data_rng.uniform(spec.bounds.lower, spec.bounds.upper);

            std::vector<double> row(spec.algorithm_count);
            for (std::size_t k = 0; k < spec.algorithm_count; ++k) {
                double scale = spec.error_profiles[p][k];
                double noise = scale > 0.0 ? data_rng.normal(0.0, scale) : 0.0;
                row[k] = spec.bounds.clamp(ins.target + noise);
            }
            out.dataset.instances.push_back(std::move(ins));
            out.predictions.values.push_back(std::move(row));
            out.persona_labels.push_back(static_cast<int>(p));
        }
    }
    return out;
}

} // namespace apsel
