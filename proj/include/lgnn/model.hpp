#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lgnn/graph.hpp"
#include "lgnn/layers.hpp"
#include "lgnn/ops.hpp"

namespace lgnn {

enum class CeReduction { sum, mean };

struct ModelConfig {
    std::vector<LayerSpec> layers;
    double lambda_g = 0.0005;
    double lambda_l = 1.0;
    double lambda = 1.0;
    double dropout = 0.5;
    CeReduction ce_reduction = CeReduction::sum;
    /// Diagnostics only: inserts an identity op with a wrong backward rule
    /// after the first layer, as a negative control for gradient checks.
    bool debug_corrupt_backward = false;

    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }

    void validate(std::size_t feature_dim, std::size_t num_classes) const {
        if (layers.empty()) throw Error("model: no layers");
        if (layers.front().in_dim != feature_dim)
            throw Error("model: first layer expects " + std::to_string(layers.front().in_dim) +
                        " features, bundle has " + std::to_string(feature_dim));
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].validate();
            if (l + 1 < layers.size() && layers[l].out_dim != layers[l + 1].in_dim)
                throw Error("model: layer " + std::to_string(l + 1) + " output does not feed layer " +
                            std::to_string(l + 2));
        }
        if (layers.back().out_dim != num_classes)
            throw Error("model: output width " + std::to_string(layers.back().out_dim) + " != " +
                        std::to_string(num_classes) + " classes");
        if (lambda_g < 0 || lambda_l < 0 || lambda < 0) throw Error("model: loss coefficients must be non-negative");
        if (dropout < 0 || dropout >= 1) throw Error("model: dropout must be in [0, 1)");
    }
};

/// User-facing model choice, resolved against dataset dimensions by
/// build_model_config.
struct ModelOptions {
    /// gcn, gat, gin, lgcn, lgat, lgin, gcn-film, gat-film, gin-film
    std::string model = "lgcn";
    std::optional<Localization> localization;  // overrides the name's default
    std::size_t hidden = 8;
    std::size_t heads = 8;  // gat hidden layers; the output layer has one head
    std::size_t num_layers = 2;
    double lambda_g = 0.0005;
    std::optional<double> lambda_l;
    std::optional<double> lambda;
    double dropout = 0.5;
    Activation hidden_activation = Activation::relu;
    Activation gate_activation = Activation::tanh;
    std::optional<GcnNorm> gcn_norm;
    /// 0 = automatic (bottleneck of width `hidden` when d_in > threshold).
    std::size_t gate_bottleneck = 0;
    std::size_t bottleneck_threshold = 64;
    CeReduction ce_reduction = CeReduction::sum;
};

struct ModelName {
    ArchKind arch;
    Localization localization;
};

inline ModelName parse_model_name(const std::string& s) {
    auto base = [&](const std::string& b) { return parse_arch(b); };
    if (s == "gcn" || s == "gat" || s == "gin") return {base(s), Localization::none};
    if (s == "lgcn" || s == "lgat" || s == "lgin") return {base(s.substr(1)), Localization::both};
    if (s.size() > 5 && s.substr(s.size() - 5) == "-film") return {base(s.substr(0, s.size() - 5)), Localization::film};
    throw Error("unknown model '" + s + "'");
}

inline ModelConfig build_model_config(const ModelOptions& o, std::size_t feature_dim, std::size_t num_classes) {
    const ModelName mn = parse_model_name(o.model);
    const Localization loc = o.localization.value_or(mn.localization);
    if (o.num_layers < 1) throw Error("model: need at least one layer");
    if (o.hidden == 0) throw Error("model: hidden width must be positive");

    ModelConfig c;
    c.lambda_g = o.lambda_g;
    c.dropout = o.dropout;
    c.ce_reduction = o.ce_reduction;
    const bool film = loc == Localization::film;
    // FiLM keeps plain weight decay on its gate maps and no gate penalty.
    c.lambda_l = o.lambda_l.value_or(film ? o.lambda_g : 1.0);
    c.lambda = o.lambda.value_or(film ? 0.0 : (mn.arch == ArchKind::gat ? 0.1 : 1.0));
    const GcnNorm norm =
        o.gcn_norm.value_or(o.model == "gcn" ? GcnNorm::sym : GcnNorm::context_mean);

    std::size_t in = feature_dim;
    for (std::size_t l = 0; l < o.num_layers; ++l) {
        const bool last = l + 1 == o.num_layers;
        LayerSpec s;
        s.kind = mn.arch;
        s.in_dim = in;
        s.localization = loc;
        s.heads = mn.arch == ArchKind::gat && !last ? o.heads : 1;
        s.out_dim = last ? num_classes : o.hidden * s.heads;
        s.activation = last ? Activation::identity : o.hidden_activation;
        s.gate_activation = o.gate_activation;
        s.gcn_norm = norm;
        s.gin_mlp_activation = o.hidden_activation;
        if (s.node_level()) {
            if (o.gate_bottleneck > 0 && o.gate_bottleneck <= in) s.gate_bottleneck = o.gate_bottleneck;
            else if (o.gate_bottleneck == 0 && in > o.bottleneck_threshold) s.gate_bottleneck = o.hidden;
        }
        c.layers.push_back(s);
        in = s.out_dim;
    }
    c.validate(feature_dim, num_classes);
    return c;
}

template <class T>
struct Param {
    std::string name;
    Tensor<T> tensor;
    ParamGroup group;
};

/// Every learnable tensor, tagged as global or localization parameter.
template <class T>
class ParamRegistry {
public:
    void add(std::string name, Tensor<T> t, ParamGroup group) {
        for (const auto& p : params_)
            if (p.name == name || p.tensor.same_storage(t)) throw Error("registry: '" + name + "' registered twice");
        params_.push_back({std::move(name), std::move(t), group});
    }

    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }

    std::size_t count(std::optional<ParamGroup> group = std::nullopt) const {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (!group || p.group == *group) n += p.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.clear_grad();
    }

    std::vector<std::vector<T>> snapshot() const {
        std::vector<std::vector<T>> s;
        s.reserve(params_.size());
        for (const auto& p : params_) s.push_back(p.tensor.values());
        return s;
    }
    void restore(const std::vector<std::vector<T>>& s) {
        if (s.size() != params_.size()) throw Error("registry: snapshot size mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) params_[i].tensor.values() = s[i];
    }

private:
    std::vector<Param<T>> params_;
};

template <class T>
struct Model {
    ModelConfig config;
    std::vector<LayerParams<T>> layers;
    ParamRegistry<T> registry;
};

template <class T, class Rng>
Model<T> create_model(const ModelConfig& config, Rng& rng) {
    Model<T> m;
    m.config = config;
    for (std::size_t l = 0; l < config.layers.size(); ++l) {
        m.layers.push_back(init_layer_params<T>(config.layers[l], rng));
        m.layers.back().for_each([&](const std::string& name, Tensor<T>& t, ParamGroup g) {
            m.registry.add("layer" + std::to_string(l + 1) + "." + name, t, g);
        });
    }
    return m;
}

struct ParamCountEntry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    ParamGroup group = ParamGroup::global;
};

struct ParamCounts {
    std::size_t global = 0;
    std::size_t localization = 0;
    std::size_t total = 0;
    std::vector<ParamCountEntry> tensors;
};

/// Exact parameter counts per tensor and per group.
inline ParamCounts param_count(const ModelConfig& config) {
    ParamCounts c;
    for (std::size_t l = 0; l < config.layers.size(); ++l) {
        const LayerSpec& s = config.layers[l];
        const std::string pre = "layer" + std::to_string(l + 1) + ".";
        auto add = [&](std::string name, std::size_t r, std::size_t k, ParamGroup g) {
            c.tensors.push_back({pre + std::move(name), r, k, g});
            (g == ParamGroup::global ? c.global : c.localization) += r * k;
        };
        const std::size_t din = s.in_dim, dout = s.out_dim, hd = s.head_dim();
        for (std::size_t h = 0; h < s.heads; ++h) {
            const std::string hp = s.heads > 1 ? "head" + std::to_string(h) + "." : "";
            add(hp + "W", hd, din, ParamGroup::global);
        }
        if (s.kind == ArchKind::gat)
            for (std::size_t h = 0; h < s.heads; ++h)
                add((s.heads > 1 ? "head" + std::to_string(h) + "." : std::string()) + "attention", 1, 2 * hd,
                    ParamGroup::global);
        if (s.kind == ArchKind::gin) {
            add("mlp1", s.mlp_hidden(), dout, ParamGroup::global);
            add("mlp2", dout, s.mlp_hidden(), ParamGroup::global);
        }
        if (s.node_level()) {
            for (const char* g : {"node_scale", "node_shift"}) {
                if (s.gate_bottleneck) {
                    add(std::string(g) + ".first", *s.gate_bottleneck, din, ParamGroup::localization);
                    add(std::string(g) + ".second", din, *s.gate_bottleneck, ParamGroup::localization);
                } else {
                    add(g, din, din, ParamGroup::localization);
                }
            }
        }
        if (s.edge_level()) {
            add("edge_scale", dout, 2 * din, ParamGroup::localization);
            add("edge_shift", dout, 2 * din, ParamGroup::localization);
        }
        if (s.film()) {
            add("film_scale", dout, din, ParamGroup::localization);
            add("film_shift", dout, din, ParamGroup::localization);
        }
    }
    c.total = c.global + c.localization;
    return c;
}

template <class T>
struct ForwardResult {
    Tensor<T> probs;
    GateState<T> gates;
};

namespace detail {

// identity forward, gradient scaled by 1.5 on the way back
template <class T>
Tensor<T> faulty_identity(Tape<T>& tape, const Tensor<T>& x) {
    const bool track = tape.wants(x);
    Tensor<T> out(x.rows(), x.cols(), std::vector<T>(x.values()), track);
    if (track) {
        tape.record("faulty_identity", {x.id()}, out.id(), [x, out]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += T(1.5) * g[i];
        });
    }
    return out;
}

}  // namespace detail

/// Runs every layer and applies a row softmax to the output representation.
/// Dropout on layer inputs is active only when `training` is set.
template <class T, class Rng>
ForwardResult<T> model_forward(Tape<T>& tape, const Model<T>& model, const GraphBundle& g, const Tensor<T>& x,
                               bool training, Rng& rng, const ForwardOptions& opt = {}) {
    ForwardResult<T> r;
    Tensor<T> h = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (training && model.config.dropout > 0) h = ops::dropout(tape, h, model.config.dropout, rng);
        h = layer_forward(tape, h, g, model.config.layers[l], model.layers[l], r.gates, opt);
        if (l == 0 && model.config.debug_corrupt_backward) h = detail::faulty_identity(tape, h);
    }
    r.probs = ops::softmax_rows(tape, h);
    return r;
}

template <class T>
struct LossTerms {
    Tensor<T> total;
    double cross_entropy = 0;
    double global_l2 = 0;
    double local_l2 = 0;
    /// lambda * (||A - 1||^2 / |A| + ||B||^2 / |B|)
    double gate_penalty = 0;
};

/// Cross-entropy over the labeled nodes plus the global, localization and
/// gate regularizers.
template <class T>
LossTerms<T> loss_total(Tape<T>& tape, const Tensor<T>& probs, const std::vector<int>& labels,
                        const std::vector<std::size_t>& train, const ParamRegistry<T>& registry,
                        const GateState<T>& gates, double lambda_g, double lambda_l, double lambda,
                        CeReduction reduction = CeReduction::sum) {
    if (train.empty()) throw Error("loss: empty labeled set");
    LossTerms<T> out;
    Tensor<T> ce = ops::nll_from_probs(tape, probs, labels, train);
    if (reduction == CeReduction::mean) ce = ops::affine(tape, ce, T(1.0 / static_cast<double>(train.size())), T(0));
    out.cross_entropy = static_cast<double>(ce.item());
    Tensor<T> total = ce;

    auto group_sum = [&](ParamGroup grp) -> std::optional<Tensor<T>> {
        std::optional<Tensor<T>> acc;
        for (const auto& p : registry.params()) {
            if (p.group != grp) continue;
            auto s = ops::sum_squares(tape, p.tensor);
            acc = acc ? ops::add(tape, *acc, s) : s;
        }
        return acc;
    };
    if (auto g = group_sum(ParamGroup::global)) {
        out.global_l2 = static_cast<double>(g->item());
        if (lambda_g != 0) total = ops::add(tape, total, ops::affine(tape, *g, T(lambda_g), T(0)));
    }
    if (auto l = group_sum(ParamGroup::localization)) {
        out.local_l2 = static_cast<double>(l->item());
        if (lambda_l != 0) total = ops::add(tape, total, ops::affine(tape, *l, T(lambda_l), T(0)));
    }

    auto gate_sum = [&](const std::vector<Tensor<T>>& set, T center, std::size_t count) -> std::optional<Tensor<T>> {
        if (count == 0) return std::nullopt;
        std::optional<Tensor<T>> acc;
        for (const auto& t : set) {
            auto s = ops::sum_squares(tape, t, center);
            acc = acc ? ops::add(tape, *acc, s) : s;
        }
        return ops::affine(tape, *acc, T(1.0 / static_cast<double>(count)), T(0));
    };
    std::optional<Tensor<T>> pen;
    if (auto a = gate_sum(gates.scales, T(1), gates.scale_elements())) pen = a;
    if (auto b = gate_sum(gates.shifts, T(0), gates.shift_elements())) pen = pen ? ops::add(tape, *pen, *b) : *b;
    if (pen) {
        out.gate_penalty = lambda * static_cast<double>(pen->item());
        if (lambda != 0) total = ops::add(tape, total, ops::affine(tape, *pen, T(lambda), T(0)));
    }
    out.total = total;
    return out;
}

}  // namespace lgnn
