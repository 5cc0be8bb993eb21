#ifndef APSEL_SIAMESE_HPP
#define APSEL_SIAMESE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "apsel/dataset.hpp"
#include "apsel/perfspace.hpp"
#include "apsel/personas.hpp"

namespace apsel {

enum class Activation { relu, tanh };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

// Shared-weight MLP embedding: hidden layers activated, identity output,
// optional projection to the unit sphere.
struct EmbeddingModel {
    std::vector<std::size_t> layer_sizes;
    std::vector<std::vector<double>> weights; // per layer, row-major (out x in)
    std::vector<std::vector<double>> biases;
    Activation activation = Activation::relu;
    bool normalize_output = true;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t embedding_dim() const { return layer_sizes.back(); }
    std::size_t parameter_count() const;

    std::string checksum() const;
    void save(const std::string& path) const;
    static EmbeddingModel load(const std::string& path);
};

// Glorot-uniform weights from a seeded generator, zero biases.
EmbeddingModel init_model(const std::vector<std::size_t>& layer_sizes, Activation activation,
                          bool normalize_output, std::uint64_t seed);

std::vector<double> embed(const EmbeddingModel& model, const std::vector<double>& features);
std::vector<std::vector<double>> embed_all(const EmbeddingModel& model, const Dataset& data);

double triplet_loss(const std::vector<double>& a, const std::vector<double>& p,
                    const std::vector<double>& n, double margin, DistanceKind kind);

double contrastive_loss(const std::vector<double>& u, const std::vector<double>& v,
                        bool same, double margin, DistanceKind kind);

enum class LossKind { triplet, contrastive };
enum class OptimizerKind { sgd, adam };

LossKind parse_loss(const std::string& name);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
    // On unit-normalized embeddings a small margin leaves the clusters so
    // loose that the alpha cutoff at inference rejects most neighbors; 0.7
    // keeps the hinge active long enough to produce usable geometry.
    double margin = 0.7;
    LossKind loss = LossKind::triplet;
    double learning_rate = 1e-3;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    DistanceKind distance_kind = DistanceKind::euclidean;

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_loss;          // mean loss per epoch
    std::vector<double> epoch_satisfaction;  // fraction with d(a,p)+margin <= d(a,n)
    std::string final_checksum;
};

std::pair<EmbeddingModel, TrainReport> train(EmbeddingModel model, const std::vector<Triplet>& triplets,
                                             const Dataset& features, const TrainConfig& config);

// Fraction of triplets the model satisfies; used for held-out evaluation.
double triplet_satisfaction(const EmbeddingModel& model, const std::vector<Triplet>& triplets,
                            const Dataset& features, double margin, DistanceKind kind);

// Max relative error between analytic and central-difference gradients over
// all parameters. Throws for ill-conditioned inputs (inactive hinge, or a
// hinge/activation kink within finite-difference reach); callers resample.
double grad_check(const EmbeddingModel& model, const std::vector<double>& anchor,
                  const std::vector<double>& positive, const std::vector<double>& negative,
                  const TrainConfig& config);

} // namespace apsel

#endif
