#include "apsel/personas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "apsel/rng.hpp"
#include "apsel/textio.hpp"

namespace apsel {

std::string difficulty_name(Difficulty d) {
    switch (d) {
        case Difficulty::easy: return "easy";
        case Difficulty::semi_hard: return "semi_hard";
        case Difficulty::hard: return "hard";
    }
    return "?";
}

Difficulty parse_difficulty(const std::string& name) {
    if (name == "easy") return Difficulty::easy;
    if (name == "semi_hard") return Difficulty::semi_hard;
    if (name == "hard") return Difficulty::hard;
    throw std::invalid_argument("unknown difficulty '" + name + "'");
}

void MiningConfig::validate() const {
    if (!(pos_radius >= 0.0)) throw std::invalid_argument("mining: pos_radius must be >= 0");
    if (!(neg_radius > pos_radius)) throw std::invalid_argument("mining: neg_radius must be > pos_radius");
    if (triplets_per_anchor == 0) throw std::invalid_argument("mining: triplets_per_anchor must be positive");
    double mix_sum = difficulty_mix[0] + difficulty_mix[1] + difficulty_mix[2];
    for (double m : difficulty_mix) {
        if (!(m >= 0.0)) throw std::invalid_argument("mining: difficulty mix entries must be >= 0");
    }
    if (std::fabs(mix_sum - 1.0) > 1e-9) {
        throw std::invalid_argument("mining: difficulty mix must sum to 1");
    }
}

MiningConfig MiningConfig::defaults_for(const PerformanceSpace& space) {
    MiningConfig cfg;
    double diameter = bbox_diameter(space);
    cfg.pos_radius = 0.10 * diameter;
    cfg.neg_radius = 0.25 * diameter;
    return cfg;
}

static double feature_distance(const Instance& a, const Instance& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.features.size(); ++d) {
        double diff = a.features[d] - b.features[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

namespace {
struct AnchorTriplets {
    std::string anchor_id;
    std::vector<Triplet> emitted;
};
} // namespace

std::vector<Triplet> mine_triplets_radius(const PerformanceSpace& space, const Dataset& features,
                                          const MiningConfig& config) {
    config.validate();
    const std::size_t n = space.size();
    if (n < 3) throw std::runtime_error("mining: need at least 3 instances");
    if (features.size() != n) throw std::runtime_error("mining: feature dataset not aligned to space");

    Rng rng(config.seed);
    std::vector<std::size_t> anchors(n);
    std::iota(anchors.begin(), anchors.end(), 0);
    rng.shuffle(anchors);

    std::size_t lacked_positive = 0;
    std::size_t lacked_negative = 0;
    std::vector<AnchorTriplets> per_anchor;

    for (std::size_t a : anchors) {
        std::vector<std::size_t> positives;
        std::vector<std::size_t> negatives;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a) continue;
            double d = distance(space.values[a], space.values[j], config.distance_kind);
            if (d <= config.pos_radius &&
                (!config.require_same_best || space.best_algorithm[j] == space.best_algorithm[a])) {
                positives.push_back(j);
            } else if (d >= config.neg_radius &&
                       (!config.require_diff_best || space.best_algorithm[j] != space.best_algorithm[a])) {
                negatives.push_back(j);
            }
        }
        if (positives.empty()) { ++lacked_positive; continue; }
        if (negatives.empty()) { ++lacked_negative; continue; }

        // Negatives sorted by feature distance: index 0 is feature-closest,
        // i.e. the hardest kind of negative.
        std::sort(negatives.begin(), negatives.end(), [&](std::size_t x, std::size_t y) {
            double dx = feature_distance(features.instances[a], features.instances[x]);
            double dy = feature_distance(features.instances[a], features.instances[y]);
            if (dx != dy) return dx < dy;
            return x < y;
        });
        auto tercile = [&](std::size_t idx) { return idx * 3 / negatives.size(); }; // 0=hard 1=semi 2=easy
        auto tercile_difficulty = [](std::size_t b) {
            return b == 0 ? Difficulty::hard : (b == 1 ? Difficulty::semi_hard : Difficulty::easy);
        };

        AnchorTriplets at;
        at.anchor_id = space.instance_ids[a];
        for (std::size_t t = 0; t < config.triplets_per_anchor; ++t) {
            // Requested bucket per the difficulty mix; fall back to the whole
            // candidate list when the bucket is empty.
            double r = rng.uniform();
            std::size_t want; // 0=hard 1=semi 2=easy
            if (r < config.difficulty_mix[0]) want = 2;
            else if (r < config.difficulty_mix[0] + config.difficulty_mix[1]) want = 1;
            else want = 0;

            std::vector<std::size_t> bucket_members;
            for (std::size_t idx = 0; idx < negatives.size(); ++idx) {
                if (tercile(idx) == want) bucket_members.push_back(idx);
            }
            std::size_t neg_idx = bucket_members.empty()
                                      ? rng.index(negatives.size())
                                      : bucket_members[rng.index(bucket_members.size())];

            Triplet trip;
            trip.anchor = space.instance_ids[a];
            trip.positive = space.instance_ids[positives[rng.index(positives.size())]];
            trip.negative = space.instance_ids[negatives[neg_idx]];
            trip.difficulty = tercile_difficulty(tercile(neg_idx));
            at.emitted.push_back(std::move(trip));
        }
        per_anchor.push_back(std::move(at));
    }

    if (per_anchor.empty()) {
        throw std::runtime_error("mining: no valid triplet anywhere (" +
                                 std::to_string(lacked_positive) + " anchors lacked positives, " +
                                 std::to_string(lacked_negative) + " lacked negatives)");
    }

    // Output ordered by anchor id, then emission index.
    std::sort(per_anchor.begin(), per_anchor.end(),
              [](const AnchorTriplets& x, const AnchorTriplets& y) { return x.anchor_id < y.anchor_id; });
    std::vector<Triplet> out;
    for (auto& at : per_anchor) {
        for (auto& t : at.emitted) out.push_back(std::move(t));
    }
    return out;
}

static double sq_dist(const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double d = u[i] - v[i];
        s += d * d;
    }
    return s;
}

PersonaAssignment kmeans(const PerformanceSpace& space, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters, std::vector<double>* objective_history) {
    const std::size_t n = space.size();
    if (k < 2) throw std::invalid_argument("kmeans: k must be >= 2");
    if (k > n) throw std::invalid_argument("kmeans: k must be <= instance count");

    Rng rng(seed);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);

    // k-means++ seeding.
    centroids.push_back(space.values[rng.index(n)]);
    std::vector<double> d2(n);
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(space.values[i], c));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centroids.push_back(space.values[rng.index(n)]);
            continue;
        }
        double r = rng.uniform() * total;
        double acc = 0.0;
        std::size_t chosen = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= r) { chosen = i; break; }
        }
        centroids.push_back(space.values[chosen]);
    }

    std::vector<int> assign(n, -1);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(space.values[i], centroids[0]);
            for (std::size_t c = 1; c < k; ++c) {
                double d = sq_dist(space.values[i], centroids[c]);
                if (d < best_d) { best_d = d; best = static_cast<int>(c); }
            }
            objective += best_d;
            if (assign[i] != best) { assign[i] = best; changed = true; }
        }
        if (objective_history) objective_history->push_back(objective);
        if (!changed) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(space.algo_count(), 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = static_cast<std::size_t>(assign[i]);
            ++counts[c];
            for (std::size_t d = 0; d < space.algo_count(); ++d) sums[c][d] += space.values[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t d = 0; d < space.algo_count(); ++d) {
                centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
            }
        }
        // Repair empty clusters by reseeding to the farthest point.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = sq_dist(space.values[i], centroids[static_cast<std::size_t>(assign[i])]);
                if (d > far_d) { far_d = d; far = i; }
            }
            centroids[c] = space.values[far];
        }
    }

    PersonaAssignment out;
    out.method = PersonaAssignment::Method::kmeans;
    out.persona = std::move(assign);
    return out;
}

PersonaAssignment radius_assignment(const PerformanceSpace& space, const MiningConfig& config) {
    config.validate();
    const std::size_t n = space.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (config.require_same_best && space.best_algorithm[i] != space.best_algorithm[j]) continue;
            if (distance(space.values[i], space.values[j], config.distance_kind) > config.pos_radius) continue;
            parent[find(i)] = find(j);
        }
    }

    PersonaAssignment out;
    out.method = PersonaAssignment::Method::radius;
    out.persona.resize(n);
    std::unordered_map<std::size_t, int> ids;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t root = find(i);
        auto it = ids.find(root);
        if (it == ids.end()) it = ids.emplace(root, static_cast<int>(ids.size())).first;
        out.persona[i] = it->second;
    }
    return out;
}

std::vector<Triplet> mine_triplets_cluster(const PerformanceSpace& space,
                                           const PersonaAssignment& assignment,
                                           std::size_t per_anchor, std::uint64_t seed) {
    const std::size_t n = space.size();
    if (assignment.persona.size() != n) throw std::invalid_argument("cluster mining: assignment not aligned");
    if (per_anchor == 0) throw std::invalid_argument("cluster mining: per_anchor must be positive");

    std::unordered_map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[assignment.persona[i]].push_back(i);

    bool has_pair = false;
    for (const auto& [id, members] : clusters) {
        if (members.size() >= 2 && members.size() < n) { has_pair = true; break; }
    }
    if (!has_pair) {
        throw std::runtime_error("cluster mining: need a cluster with >= 2 members and a non-empty complement");
    }

    Rng rng(seed);
    std::vector<AnchorTriplets> per_anchor_out;
    for (std::size_t a = 0; a < n; ++a) {
        const auto& own = clusters[assignment.persona[a]];
        if (own.size() < 2 || own.size() == n) continue;

        std::vector<std::size_t> positives;
        for (std::size_t j : own) {
            if (j != a) positives.push_back(j);
        }
        std::vector<std::size_t> negatives;
        for (std::size_t j = 0; j < n; ++j) {
            if (assignment.persona[j] != assignment.persona[a]) negatives.push_back(j);
        }

        AnchorTriplets at;
        at.anchor_id = space.instance_ids[a];
        for (std::size_t t = 0; t < per_anchor; ++t) {
            Triplet trip;
            trip.anchor = space.instance_ids[a];
            trip.positive = space.instance_ids[positives[rng.index(positives.size())]];
            trip.negative = space.instance_ids[negatives[rng.index(negatives.size())]];
            trip.difficulty = Difficulty::semi_hard; // clustering offers no finer signal
            at.emitted.push_back(std::move(trip));
        }
        per_anchor_out.push_back(std::move(at));
    }

    std::sort(per_anchor_out.begin(), per_anchor_out.end(),
              [](const AnchorTriplets& x, const AnchorTriplets& y) { return x.anchor_id < y.anchor_id; });
    std::vector<Triplet> out;
    for (auto& at : per_anchor_out) {
        for (auto& t : at.emitted) out.push_back(std::move(t));
    }
    return out;
}

double persona_purity(const PersonaAssignment& assignment, const PerformanceSpace& space) {
    const std::size_t n = space.size();
    if (assignment.persona.size() != n || n == 0) {
        throw std::invalid_argument("persona_purity: assignment does not cover space");
    }
    std::unordered_map<int, std::unordered_map<int, std::size_t>> counts;
    for (std::size_t i = 0; i < n; ++i) {
        counts[assignment.persona[i]][space.best_algorithm[i]]++;
    }
    std::size_t majority_total = 0;
    for (const auto& [persona, best_counts] : counts) {
        std::size_t majority = 0;
        for (const auto& [best, c] : best_counts) majority = std::max(majority, c);
        majority_total += majority;
    }
    return static_cast<double>(majority_total) / static_cast<double>(n);
}

void save_triplets(const std::vector<Triplet>& triplets, const std::string& path) {
    std::ostringstream out;
    out << "anchor,positive,negative,difficulty\n";
    for (const Triplet& t : triplets) {
        out << t.anchor << ',' << t.positive << ',' << t.negative << ','
            << difficulty_name(t.difficulty) << "\n";
    }
    write_text_file(path, out.str());
}

std::vector<Triplet> load_triplets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open triplets: " + path);
    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) != std::vector<std::string>{"anchor", "positive", "negative", "difficulty"}) {
        throw std::runtime_error("triplets " + path + ": bad header");
    }
    std::vector<Triplet> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 4) throw std::runtime_error("triplets " + path + ": malformed row");
        out.push_back({cells[0], cells[1], cells[2], parse_difficulty(cells[3])});
    }
    return out;
}

} // namespace apsel
