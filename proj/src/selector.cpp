#include "apsel/selector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "apsel/textio.hpp"

#include "json.hpp"

namespace apsel {

Aggregation parse_aggregation(const std::string& name) {
    if (name == "mean") return Aggregation::mean_perf;
    if (name == "vote") return Aggregation::majority_vote;
    throw std::invalid_argument("unknown aggregation '" + name + "' (expected mean|vote)");
}

std::string aggregation_name(Aggregation a) {
    return a == Aggregation::mean_perf ? "mean" : "vote";
}

SelectorModel fit_selector(const EmbeddingModel& model, const Dataset& labelled,
                           const PredictionMatrix& preds, std::size_t k, double alpha,
                           DistanceKind distance_kind, Aggregation aggregation) {
    if (labelled.size() == 0) throw std::invalid_argument("fit_selector: empty labelled set");
    if (k == 0) throw std::invalid_argument("fit_selector: k must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("fit_selector: alpha must be > 0");

    SelectorModel s;
    s.embedding = model;
    s.k = k;
    s.alpha = alpha;
    s.distance_kind = distance_kind;
    s.aggregation = aggregation;
    s.reference_perf = build_space(labelled, preds, PerfMetric::riip_mpre);
    s.reference_best = s.reference_perf.best_algorithm;
    s.reference_ids = s.reference_perf.instance_ids;
    s.reference_embeddings = embed_all(model, labelled);

    // Fallback: the per-set single best on the labelled data.
    std::vector<std::vector<double>> errors = absolute_errors(labelled, preds);
    int best = 0;
    double best_mean = 0.0;
    for (std::size_t kcol = 0; kcol < preds.cols(); ++kcol) {
        double sum = 0.0;
        for (std::size_t i = 0; i < errors.size(); ++i) sum += errors[i][kcol];
        double mean = sum / static_cast<double>(errors.size());
        if (kcol == 0 || mean < best_mean) {
            best_mean = mean;
            best = static_cast<int>(kcol);
        }
    }
    s.fallback = best;
    return s;
}

SelectionOutcome select(const SelectorModel& selector, const std::vector<double>& features) {
    std::vector<double> u = embed(selector.embedding, features);

    // Candidates strictly inside the alpha ball, then the k nearest of them.
    struct Cand { double dist; std::string id; std::size_t index; };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < selector.reference_embeddings.size(); ++i) {
        double d = distance(u, selector.reference_embeddings[i], selector.distance_kind);
        if (d < selector.alpha) cands.push_back({d, selector.reference_ids[i], i});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.id < b.id;
    });
    if (cands.size() > selector.k) cands.resize(selector.k);

    SelectionOutcome out;
    if (cands.empty()) {
        out.chosen = selector.fallback;
        out.used_fallback = true;
        return out;
    }

    const std::size_t m = selector.reference_perf.algo_count();
    if (selector.aggregation == Aggregation::mean_perf) {
        std::vector<double> mean(m, 0.0);
        for (const Cand& c : cands) {
            const auto& row = selector.reference_perf.values[c.index];
            for (std::size_t kcol = 0; kcol < m; ++kcol) mean[kcol] += row[kcol];
        }
        int best = 0;
        for (std::size_t kcol = 1; kcol < m; ++kcol) {
            if (mean[kcol] > mean[static_cast<std::size_t>(best)]) best = static_cast<int>(kcol);
        }
        out.chosen = best;
    } else {
        std::vector<std::size_t> votes(m, 0);
        for (const Cand& c : cands) votes[static_cast<std::size_t>(selector.reference_best[c.index])]++;
        int best = 0;
        for (std::size_t kcol = 1; kcol < m; ++kcol) {
            if (votes[kcol] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(kcol);
        }
        out.chosen = best;
    }
    for (const Cand& c : cands) out.neighbors_used.emplace_back(c.id, c.dist);
    return out;
}

std::vector<SelectionOutcome> select_batch(const SelectorModel& selector, const Dataset& data) {
    std::vector<SelectionOutcome> out;
    out.reserve(data.size());
    for (const Instance& ins : data.instances) out.push_back(select(selector, ins.features));
    return out;
}

void save_selections(const std::vector<SelectionOutcome>& outcomes, const Dataset& data,
                     const std::vector<std::string>& algorithm_ids, const std::string& path) {
    if (outcomes.size() != data.size()) throw std::runtime_error("save_selections: outcome count mismatch");
    std::ostringstream out;
    out << "id,chosen,used_fallback,n_neighbors\n";
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        out << data.instances[i].id << ','
            << algorithm_ids[static_cast<std::size_t>(outcomes[i].chosen)] << ','
            << (outcomes[i].used_fallback ? 1 : 0) << ','
            << outcomes[i].neighbors_used.size() << "\n";
    }
    write_text_file(path, out.str());
}

static nlohmann::ordered_json space_to_json(const PerformanceSpace& space) {
    nlohmann::ordered_json j;
    j["metric"] = metric_name(space.metric);
    j["algorithm_ids"] = space.algorithm_ids;
    j["instance_ids"] = space.instance_ids;
    j["values"] = space.values;
    j["best_algorithm"] = space.best_algorithm;
    return j;
}

static PerformanceSpace space_from_json(const nlohmann::json& j) {
    PerformanceSpace space;
    space.metric = parse_metric(j.at("metric").get<std::string>());
    space.algorithm_ids = j.at("algorithm_ids").get<std::vector<std::string>>();
    space.instance_ids = j.at("instance_ids").get<std::vector<std::string>>();
    space.values = j.at("values").get<std::vector<std::vector<double>>>();
    space.best_algorithm = j.at("best_algorithm").get<std::vector<int>>();
    return space;
}

void SelectorModel::save(const std::string& path) const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json e;
    e["layer_sizes"] = embedding.layer_sizes;
    e["activation"] = activation_name(embedding.activation);
    e["normalize_output"] = embedding.normalize_output;
    e["weights"] = embedding.weights;
    e["biases"] = embedding.biases;
    e["checksum"] = embedding.checksum();
    j["embedding"] = std::move(e);
    j["reference_ids"] = reference_ids;
    j["reference_embeddings"] = reference_embeddings;
    j["reference_best"] = reference_best;
    j["reference_perf"] = space_to_json(reference_perf);
    j["k"] = k;
    j["alpha"] = alpha;
    j["distance"] = distance_name(distance_kind);
    j["aggregation"] = aggregation_name(aggregation);
    j["fallback"] = fallback;
    write_text_file(path, j.dump(2) + "\n");
}

SelectorModel SelectorModel::load(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("selector " + path + ": " + e.what());
    }
    SelectorModel s;
    try {
        const auto& e = j.at("embedding");
        s.embedding.layer_sizes = e.at("layer_sizes").get<std::vector<std::size_t>>();
        s.embedding.activation = parse_activation(e.at("activation").get<std::string>());
        s.embedding.normalize_output = e.at("normalize_output").get<bool>();
        s.embedding.weights = e.at("weights").get<std::vector<std::vector<double>>>();
        s.embedding.biases = e.at("biases").get<std::vector<std::vector<double>>>();
        if (e.at("checksum").get<std::string>() != s.embedding.checksum()) {
            throw std::runtime_error("selector " + path + ": embedding checksum mismatch");
        }
        s.reference_ids = j.at("reference_ids").get<std::vector<std::string>>();
        s.reference_embeddings = j.at("reference_embeddings").get<std::vector<std::vector<double>>>();
        s.reference_best = j.at("reference_best").get<std::vector<int>>();
        s.reference_perf = space_from_json(j.at("reference_perf"));
        s.k = j.at("k").get<std::size_t>();
        s.alpha = j.at("alpha").get<double>();
        s.distance_kind = parse_distance(j.at("distance").get<std::string>());
        s.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
        s.fallback = j.at("fallback").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("selector " + path + ": " + e.what());
    }
    if (s.reference_ids.empty() || s.reference_ids.size() != s.reference_embeddings.size() ||
        s.reference_ids.size() != s.reference_best.size()) {
        throw std::runtime_error("selector " + path + ": reference arrays misaligned");
    }
    return s;
}

} // namespace apsel
