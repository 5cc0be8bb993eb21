#include "apsel/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "apsel/rng.hpp"
#include "apsel/textio.hpp"

#include "json.hpp"

namespace apsel {

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + name + "' (expected relu|tanh)");
}

std::string activation_name(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

LossKind parse_loss(const std::string& name) {
    if (name == "triplet") return LossKind::triplet;
    if (name == "contrastive") return LossKind::contrastive;
    throw std::invalid_argument("unknown loss '" + name + "' (expected triplet|contrastive)");
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd|adam)");
}

void TrainConfig::validate() const {
    if (!(margin > 0.0)) throw std::invalid_argument("train: margin must be > 0");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning rate must be >= 0");
    if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
    if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
}

std::size_t EmbeddingModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

static void validate_shapes(const EmbeddingModel& m) {
    if (m.layer_sizes.size() < 2) throw std::invalid_argument("model: need at least 2 layers");
    for (std::size_t s : m.layer_sizes) {
        if (s == 0) throw std::invalid_argument("model: layer sizes must be positive");
    }
    const std::size_t n_layers = m.layer_sizes.size() - 1;
    if (m.weights.size() != n_layers || m.biases.size() != n_layers) {
        throw std::invalid_argument("model: weight/bias layer count mismatch");
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (m.weights[l].size() != m.layer_sizes[l + 1] * m.layer_sizes[l]) {
            throw std::invalid_argument("model: weight shape mismatch at layer " + std::to_string(l));
        }
        if (m.biases[l].size() != m.layer_sizes[l + 1]) {
            throw std::invalid_argument("model: bias shape mismatch at layer " + std::to_string(l));
        }
    }
}

EmbeddingModel init_model(const std::vector<std::size_t>& layer_sizes, Activation activation,
                          bool normalize_output, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("init_model: need at least 2 layers");
    EmbeddingModel m;
    m.layer_sizes = layer_sizes;
    m.activation = activation;
    m.normalize_output = normalize_output;

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l];
        const std::size_t fan_out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> w(fan_out * fan_in);
        for (double& v : w) v = rng.uniform(-bound, bound);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(fan_out, 0.0);
    }
    validate_shapes(m);
    return m;
}

namespace {

struct ForwardCache {
    std::vector<std::vector<double>> act; // act[0]=input .. act[L]=pre-normalization output
    std::vector<std::vector<double>> pre; // pre[l]=z of layer l
    std::vector<double> out;              // final embedding
};

void forward(const EmbeddingModel& m, const std::vector<double>& input, ForwardCache& cache) {
    const std::size_t n_layers = m.layer_sizes.size() - 1;
    cache.act.assign(n_layers + 1, {});
    cache.pre.assign(n_layers, {});
    cache.act[0] = input;

    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t in = m.layer_sizes[l];
        const std::size_t out = m.layer_sizes[l + 1];
        const std::vector<double>& x = cache.act[l];
        std::vector<double> z(out);
        for (std::size_t r = 0; r < out; ++r) {
            double s = m.biases[l][r];
            const double* wr = m.weights[l].data() + r * in;
            for (std::size_t c = 0; c < in; ++c) s += wr[c] * x[c];
            z[r] = s;
        }
        cache.pre[l] = z;
        if (l + 1 < n_layers) {
            if (m.activation == Activation::relu) {
                for (double& v : z) v = v > 0.0 ? v : 0.0;
            } else {
                for (double& v : z) v = std::tanh(v);
            }
        }
        cache.act[l + 1] = std::move(z);
    }

    cache.out = cache.act[n_layers];
    if (m.normalize_output) {
        double norm = 0.0;
        for (double v : cache.out) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (double& v : cache.out) v /= norm;
        } else {
            // A fully dead relu path emits the zero vector; pin it to a fixed
            // point on the sphere so normalized embeddings always have norm 1.
            cache.out[0] = 1.0;
        }
    }
}

struct Grads {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    explicit Grads(const EmbeddingModel& m) {
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            w.emplace_back(m.weights[l].size(), 0.0);
            b.emplace_back(m.biases[l].size(), 0.0);
        }
    }

    void scale(double f) {
        for (auto& layer : w)
            for (double& v : layer) v *= f;
        for (auto& layer : b)
            for (double& v : layer) v *= f;
    }
};

// Backpropagate dL/d(embedding) through one forward pass, accumulating into g.
void backward(const EmbeddingModel& m, const ForwardCache& cache,
              const std::vector<double>& grad_out, Grads& g) {
    const std::size_t n_layers = m.layer_sizes.size() - 1;
    std::vector<double> grad = grad_out;

    if (m.normalize_output) {
        // n(x) = x/|x|; dL/dx = (g - (g.n) n) / |x|
        const std::vector<double>& x = cache.act[n_layers];
        double norm = 0.0;
        for (double v : x) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            double dot = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) dot += grad[i] * cache.out[i];
            for (std::size_t i = 0; i < x.size(); ++i) {
                grad[i] = (grad[i] - dot * cache.out[i]) / norm;
            }
        } else {
            std::fill(grad.begin(), grad.end(), 0.0);
        }
    }

    for (std::size_t l = n_layers; l-- > 0;) {
        const std::size_t in = m.layer_sizes[l];
        const std::size_t out = m.layer_sizes[l + 1];
        std::vector<double> dz = grad;
        if (l + 1 < n_layers) {
            // grad is w.r.t. the activated output of this hidden layer.
            if (m.activation == Activation::relu) {
                for (std::size_t r = 0; r < out; ++r) {
                    if (cache.pre[l][r] <= 0.0) dz[r] = 0.0; // subgradient 0 at the kink
                }
            } else {
                for (std::size_t r = 0; r < out; ++r) {
                    double t = std::tanh(cache.pre[l][r]);
                    dz[r] *= 1.0 - t * t;
                }
            }
        }
        const std::vector<double>& x = cache.act[l];
        std::vector<double> grad_x(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            const double d = dz[r];
            double* gw = g.w[l].data() + r * in;
            const double* wr = m.weights[l].data() + r * in;
            g.b[l][r] += d;
            for (std::size_t c = 0; c < in; ++c) {
                gw[c] += d * x[c];
                grad_x[c] += d * wr[c];
            }
        }
        grad = std::move(grad_x);
    }
}

struct DistGrad {
    double d = 0.0;
    std::vector<double> du;
    std::vector<double> dv;
};

DistGrad dist_with_grad(const std::vector<double>& u, const std::vector<double>& v, DistanceKind kind) {
    DistGrad out;
    out.du.assign(u.size(), 0.0);
    out.dv.assign(v.size(), 0.0);
    if (kind == DistanceKind::euclidean) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            double d = u[i] - v[i];
            s += d * d;
        }
        out.d = std::sqrt(s);
        if (out.d > 0.0) {
            for (std::size_t i = 0; i < u.size(); ++i) {
                out.du[i] = (u[i] - v[i]) / out.d;
                out.dv[i] = -out.du[i];
            }
        }
        return out;
    }
    double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu2 += u[i] * u[i];
        nv2 += v[i] * v[i];
    }
    if (nu2 == 0.0 || nv2 == 0.0) {
        throw std::invalid_argument("cosine distance undefined for zero vector");
    }
    const double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
    out.d = 1.0 - dot / (nu * nv);
    for (std::size_t i = 0; i < u.size(); ++i) {
        out.du[i] = -(v[i] / (nu * nv) - dot * u[i] / (nu2 * nu * nv));
        out.dv[i] = -(u[i] / (nu * nv) - dot * v[i] / (nv2 * nv * nu));
    }
    return out;
}

// Loss and parameter gradients for one triplet under the configured loss.
double triplet_backward(const EmbeddingModel& m, const std::vector<double>& af,
                        const std::vector<double>& pf, const std::vector<double>& nf,
                        const TrainConfig& cfg, Grads& g) {
    ForwardCache ca, cp, cn;
    forward(m, af, ca);
    forward(m, pf, cp);
    forward(m, nf, cn);

    if (cfg.loss == LossKind::triplet) {
        DistGrad dap = dist_with_grad(ca.out, cp.out, cfg.distance_kind);
        DistGrad dan = dist_with_grad(ca.out, cn.out, cfg.distance_kind);
        double loss = dap.d - dan.d + cfg.margin;
        if (loss <= 0.0) return 0.0;

        std::vector<double> ga(ca.out.size()), gp(cp.out.size()), gn(cn.out.size());
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] = dap.du[i] - dan.du[i];
            gp[i] = dap.dv[i];
            gn[i] = -dan.dv[i];
        }
        backward(m, ca, ga, g);
        backward(m, cp, gp, g);
        backward(m, cn, gn, g);
        return loss;
    }

    // Contrastive: (anchor, positive) is a same pair, (anchor, negative) a
    // different pair.
    DistGrad dap = dist_with_grad(ca.out, cp.out, cfg.distance_kind);
    DistGrad dan = dist_with_grad(ca.out, cn.out, cfg.distance_kind);
    double loss = dap.d * dap.d;
    std::vector<double> ga(ca.out.size(), 0.0), gp(cp.out.size(), 0.0), gn(cn.out.size(), 0.0);
    for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += 2.0 * dap.d * dap.du[i];
        gp[i] += 2.0 * dap.d * dap.dv[i];
    }
    double hinge = cfg.margin - dan.d;
    if (hinge > 0.0) {
        loss += hinge * hinge;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += -2.0 * hinge * dan.du[i];
            gn[i] += -2.0 * hinge * dan.dv[i];
        }
    }
    backward(m, ca, ga, g);
    backward(m, cp, gp, g);
    backward(m, cn, gn, g);
    return loss;
}

double triplet_loss_at(const EmbeddingModel& m, const std::vector<double>& af,
                       const std::vector<double>& pf, const std::vector<double>& nf,
                       const TrainConfig& cfg) {
    std::vector<double> a = embed(m, af), p = embed(m, pf), n = embed(m, nf);
    if (cfg.loss == LossKind::triplet) {
        return triplet_loss(a, p, n, cfg.margin, cfg.distance_kind);
    }
    return contrastive_loss(a, p, true, cfg.margin, cfg.distance_kind) +
           contrastive_loss(a, n, false, cfg.margin, cfg.distance_kind);
}

class Optimizer {
  public:
    Optimizer(const EmbeddingModel& m, const TrainConfig& cfg) : cfg_(cfg) {
        if (cfg.optimizer == OptimizerKind::adam) {
            m_ = Grads(m);
            v_ = Grads(m);
        }
    }

    void step(EmbeddingModel& model, const Grads& g) {
        if (cfg_.optimizer == OptimizerKind::sgd) {
            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
                    model.weights[l][i] -= cfg_.learning_rate * g.w[l][i];
                }
                for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
                    model.biases[l][i] -= cfg_.learning_rate * g.b[l][i];
                }
            }
            return;
        }
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        auto update = [&](std::vector<double>& param, std::vector<double>& mm,
                          std::vector<double>& vv, const std::vector<double>& grad) {
            for (std::size_t i = 0; i < param.size(); ++i) {
                mm[i] = b1 * mm[i] + (1.0 - b1) * grad[i];
                vv[i] = b2 * vv[i] + (1.0 - b2) * grad[i] * grad[i];
                param[i] -= cfg_.learning_rate * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
            }
        };
        for (std::size_t l = 0; l < model.weights.size(); ++l) {
            update(model.weights[l], m_->w[l], v_->w[l], g.w[l]);
            update(model.biases[l], m_->b[l], v_->b[l], g.b[l]);
        }
    }

  private:
    TrainConfig cfg_;
    std::optional<Grads> m_;
    std::optional<Grads> v_;
    std::uint64_t t_ = 0;
};

} // namespace

std::vector<double> embed(const EmbeddingModel& model, const std::vector<double>& features) {
    if (features.size() != model.input_dim()) {
        throw std::invalid_argument("embed: feature length " + std::to_string(features.size()) +
                                    " does not match input size " + std::to_string(model.input_dim()));
    }
    ForwardCache cache;
    forward(model, features, cache);
    return cache.out;
}

std::vector<std::vector<double>> embed_all(const EmbeddingModel& model, const Dataset& data) {
    std::vector<std::vector<double>> out;
    out.reserve(data.size());
    for (const Instance& ins : data.instances) out.push_back(embed(model, ins.features));
    return out;
}

double triplet_loss(const std::vector<double>& a, const std::vector<double>& p,
                    const std::vector<double>& n, double margin, DistanceKind kind) {
    double dap = distance(a, p, kind);
    double dan = distance(a, n, kind);
    return std::max(0.0, dap - dan + margin);
}

double contrastive_loss(const std::vector<double>& u, const std::vector<double>& v,
                        bool same, double margin, DistanceKind kind) {
    double d = distance(u, v, kind);
    if (same) return d * d;
    double hinge = std::max(0.0, margin - d);
    return hinge * hinge;
}

std::pair<EmbeddingModel, TrainReport> train(EmbeddingModel model, const std::vector<Triplet>& triplets,
                                             const Dataset& features, const TrainConfig& config) {
    config.validate();
    validate_shapes(model);
    if (triplets.empty()) throw std::invalid_argument("train: no triplets");

    auto index = id_index(features);
    struct IndexTriplet { std::size_t a, p, n; };
    std::vector<IndexTriplet> idx;
    idx.reserve(triplets.size());
    for (const Triplet& t : triplets) {
        auto ia = index.find(t.anchor);
        auto ip = index.find(t.positive);
        auto in = index.find(t.negative);
        if (ia == index.end() || ip == index.end() || in == index.end()) {
            throw std::runtime_error("train: triplet references unknown instance id '" +
                                     (ia == index.end() ? t.anchor : ip == index.end() ? t.positive : t.negative) + "'");
        }
        idx.push_back({ia->second, ip->second, in->second});
    }

    Rng rng(config.seed);
    Optimizer opt(model, config);
    TrainReport report;

    std::vector<std::size_t> order(idx.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            Grads g(model);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const IndexTriplet& t = idx[order[i]];
                batch_loss += triplet_backward(model, features.instances[t.a].features,
                                               features.instances[t.p].features,
                                               features.instances[t.n].features, config, g);
            }
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         " batch " + std::to_string(start / config.batch_size) +
                                         "; lower the learning rate");
            }
            loss_sum += batch_loss;
            g.scale(1.0 / static_cast<double>(end - start));
            opt.step(model, g);
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(idx.size()));

        std::size_t satisfied = 0;
        for (const IndexTriplet& t : idx) {
            std::vector<double> a = embed(model, features.instances[t.a].features);
            std::vector<double> p = embed(model, features.instances[t.p].features);
            std::vector<double> n = embed(model, features.instances[t.n].features);
            if (distance(a, p, config.distance_kind) + config.margin <=
                distance(a, n, config.distance_kind)) {
                ++satisfied;
            }
        }
        report.epoch_satisfaction.push_back(static_cast<double>(satisfied) /
                                            static_cast<double>(idx.size()));
    }

    report.final_checksum = model.checksum();
    return {std::move(model), std::move(report)};
}

double triplet_satisfaction(const EmbeddingModel& model, const std::vector<Triplet>& triplets,
                            const Dataset& features, double margin, DistanceKind kind) {
    if (triplets.empty()) throw std::invalid_argument("triplet_satisfaction: no triplets");
    auto index = id_index(features);
    std::size_t satisfied = 0;
    for (const Triplet& t : triplets) {
        std::vector<double> a = embed(model, features.instances[index.at(t.anchor)].features);
        std::vector<double> p = embed(model, features.instances[index.at(t.positive)].features);
        std::vector<double> n = embed(model, features.instances[index.at(t.negative)].features);
        if (distance(a, p, kind) + margin <= distance(a, n, kind)) ++satisfied;
    }
    return static_cast<double>(satisfied) / static_cast<double>(triplets.size());
}

double grad_check(const EmbeddingModel& model, const std::vector<double>& anchor,
                  const std::vector<double>& positive, const std::vector<double>& negative,
                  const TrainConfig& config) {
    config.validate();
    validate_shapes(model);
    const double step = 1e-5;

    // Condition checks: the finite-difference probe must not straddle a
    // hinge or activation kink.
    {
        ForwardCache ca, cp, cn;
        forward(model, anchor, ca);
        forward(model, positive, cp);
        forward(model, negative, cn);
        if (model.activation == Activation::relu) {
            for (const ForwardCache* c : {&ca, &cp, &cn}) {
                for (std::size_t l = 0; l + 1 < model.layer_sizes.size() - 1; ++l) {
                    for (double z : c->pre[l]) {
                        if (std::fabs(z) < 1e-3) {
                            throw std::runtime_error("grad_check: relu kink within finite-difference reach");
                        }
                    }
                }
            }
        }
        if (config.distance_kind == DistanceKind::cosine) {
            for (const ForwardCache* c : {&ca, &cp, &cn}) {
                double norm = 0.0;
                for (double v : c->out) norm += v * v;
                if (std::sqrt(norm) < 1e-3) {
                    throw std::runtime_error("grad_check: near-zero embedding under cosine distance");
                }
            }
        }
        double dap = distance(ca.out, cp.out, config.distance_kind);
        double dan = distance(ca.out, cn.out, config.distance_kind);
        if (config.distance_kind == DistanceKind::euclidean && (dap < 1e-4 || dan < 1e-4)) {
            throw std::runtime_error("grad_check: coincident embeddings");
        }
        if (config.loss == LossKind::triplet) {
            double hinge = dap - dan + config.margin;
            if (hinge <= 0.0) throw std::runtime_error("grad_check: inactive hinge");
            if (hinge < 1e-4) throw std::runtime_error("grad_check: hinge within 1e-4 of the kink");
        } else {
            double hinge = config.margin - dan;
            if (hinge <= 0.0) throw std::runtime_error("grad_check: inactive hinge");
            if (hinge < 1e-4) throw std::runtime_error("grad_check: hinge within 1e-4 of the kink");
        }
    }

    EmbeddingModel work = model;
    Grads analytic(work);
    triplet_backward(work, anchor, positive, negative, config, analytic);

    double max_rel = 0.0;
    auto probe = [&](double& param, double ga) {
        const double saved = param;
        param = saved + step;
        double up = triplet_loss_at(work, anchor, positive, negative, config);
        param = saved - step;
        double down = triplet_loss_at(work, anchor, positive, negative, config);
        param = saved;
        double gn = (up - down) / (2.0 * step);
        double rel = std::fabs(ga - gn) / std::max({std::fabs(ga), std::fabs(gn), 1e-6});
        max_rel = std::max(max_rel, rel);
    };
    for (std::size_t l = 0; l < work.weights.size(); ++l) {
        for (std::size_t i = 0; i < work.weights[l].size(); ++i) probe(work.weights[l][i], analytic.w[l][i]);
        for (std::size_t i = 0; i < work.biases[l].size(); ++i) probe(work.biases[l][i], analytic.b[l][i]);
    }
    return max_rel;
}

std::string EmbeddingModel::checksum() const {
    std::ostringstream ss;
    for (std::size_t s : layer_sizes) ss << s << ',';
    ss << activation_name(activation) << ',' << (normalize_output ? 1 : 0) << ';';
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (double v : weights[l]) ss << format_double(v) << ',';
        for (double v : biases[l]) ss << format_double(v) << ',';
    }
    return fnv1a_hex(ss.str());
}

void EmbeddingModel::save(const std::string& path) const {
    validate_shapes(*this);
    nlohmann::ordered_json j;
    j["layer_sizes"] = layer_sizes;
    j["activation"] = activation_name(activation);
    j["normalize_output"] = normalize_output;
    j["weights"] = weights;
    j["biases"] = biases;
    j["checksum"] = checksum();
    write_text_file(path, j.dump(2) + "\n");
}

EmbeddingModel EmbeddingModel::load(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("model " + path + ": " + e.what());
    }
    EmbeddingModel m;
    try {
        m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        m.activation = parse_activation(j.at("activation").get<std::string>());
        m.normalize_output = j.at("normalize_output").get<bool>();
        m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
        m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
        std::string stored = j.at("checksum").get<std::string>();
        if (stored != m.checksum()) {
            throw std::runtime_error("model " + path + ": checksum mismatch");
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("model " + path + ": " + e.what());
    }
    validate_shapes(m);
    return m;
}

} // namespace apsel
