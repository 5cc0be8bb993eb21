#ifndef APSEL_PERSONAS_HPP
#define APSEL_PERSONAS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "apsel/dataset.hpp"
#include "apsel/perfspace.hpp"

namespace apsel {

enum class Difficulty { easy, semi_hard, hard };

std::string difficulty_name(Difficulty d);
Difficulty parse_difficulty(const std::string& name);

struct Triplet {
    std::string anchor;
    std::string positive;
    std::string negative;
    Difficulty difficulty = Difficulty::semi_hard;
};

struct MiningConfig {
    double pos_radius = 0.0;                     // performance-space distance
    double neg_radius = 0.0;                     // must be > pos_radius
    DistanceKind distance_kind = DistanceKind::euclidean;
    bool require_same_best = true;               // positives share best_algorithm
    bool require_diff_best = true;               // negatives differ in best_algorithm
    std::size_t triplets_per_anchor = 2;
    std::array<double, 3> difficulty_mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}; // easy, semi_hard, hard
    std::uint64_t seed = 0;

    void validate() const;

    // Radii at 0.10 / 0.25 of the bounding-box diameter of the given space.
    static MiningConfig defaults_for(const PerformanceSpace& space);
};

// Anchor-centered mining: positives within pos_radius, negatives beyond
// neg_radius, difficulty tagged by feature-space distance terciles among the
// negative candidates (hard = feature-close but performance-far).
std::vector<Triplet> mine_triplets_radius(const PerformanceSpace& space, const Dataset& features,
                                          const MiningConfig& config);

struct PersonaAssignment {
    enum class Method { radius, kmeans };
    std::vector<int> persona; // one id per instance
    Method method = Method::kmeans;
};

// Seeded k-means++ with Lloyd iterations; empty clusters are reseeded to the
// farthest point. Optionally records the objective after each update.
PersonaAssignment kmeans(const PerformanceSpace& space, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters = 100, std::vector<double>* objective_history = nullptr);

// Connected components of the positive relation (distance <= pos_radius and,
// when configured, equal best_algorithm).
PersonaAssignment radius_assignment(const PerformanceSpace& space, const MiningConfig& config);

std::vector<Triplet> mine_triplets_cluster(const PerformanceSpace& space,
                                           const PersonaAssignment& assignment,
                                           std::size_t per_anchor, std::uint64_t seed);

// Weighted mean of the per-persona majority-best-algorithm fraction.
double persona_purity(const PersonaAssignment& assignment, const PerformanceSpace& space);

void save_triplets(const std::vector<Triplet>& triplets, const std::string& path);
std::vector<Triplet> load_triplets(const std::string& path);

} // namespace apsel

#endif
