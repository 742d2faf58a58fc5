#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lgnn/graph.hpp"
#include "lgnn/ops.hpp"
#include "lgnn/segment.hpp"

namespace lgnn {

enum class ArchKind { gcn, gat, gin };
enum class Localization { none, node, edge, both, film };
enum class Activation { relu, tanh, identity };
enum class GcnNorm { context_mean, sym };
enum class ParamGroup { global, localization };

inline std::string to_string(ArchKind k) {
    switch (k) {
        case ArchKind::gcn: return "gcn";
        case ArchKind::gat: return "gat";
        case ArchKind::gin: return "gin";
    }
    return "?";
}
inline std::string to_string(Localization l) {
    switch (l) {
        case Localization::none: return "none";
        case Localization::node: return "node";
        case Localization::edge: return "edge";
        case Localization::both: return "both";
        case Localization::film: return "film";
    }
    return "?";
}
inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}
inline std::string to_string(GcnNorm n) { return n == GcnNorm::sym ? "sym" : "context-mean"; }

inline ArchKind parse_arch(const std::string& s) {
    if (s == "gcn") return ArchKind::gcn;
    if (s == "gat") return ArchKind::gat;
    if (s == "gin") return ArchKind::gin;
    throw Error("unknown architecture '" + s + "'");
}
inline Localization parse_localization(const std::string& s) {
    if (s == "none") return Localization::none;
    if (s == "node") return Localization::node;
    if (s == "edge") return Localization::edge;
    if (s == "both" || s == "node+edge") return Localization::both;
    if (s == "film") return Localization::film;
    throw Error("unknown localization '" + s + "'");
}
inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    throw Error("unknown activation '" + s + "'");
}
inline GcnNorm parse_gcn_norm(const std::string& s) {
    if (s == "context-mean" || s == "mean") return GcnNorm::context_mean;
    if (s == "sym") return GcnNorm::sym;
    throw Error("unknown gcn_norm '" + s + "'");
}

struct LayerSpec {
    ArchKind kind = ArchKind::gcn;
    std::size_t in_dim = 0;
    /// Total output width; for gat this is heads * per-head width.
    std::size_t out_dim = 0;
    Localization localization = Localization::none;
    std::size_t heads = 1;
    /// Node-gate width k; gates become two chained maps d_in -> k -> d_in.
    std::optional<std::size_t> gate_bottleneck;
    /// Applied to the layer output; the output layer uses identity.
    Activation activation = Activation::relu;
    Activation gate_activation = Activation::tanh;
    GcnNorm gcn_norm = GcnNorm::context_mean;
    /// Hidden width of the gin MLP (defaults to out_dim when 0).
    std::size_t gin_mlp_hidden = 0;
    /// Inner activation of the gin MLP.
    Activation gin_mlp_activation = Activation::relu;
    double attention_slope = 0.2;

    bool node_level() const { return localization == Localization::node || localization == Localization::both; }
    bool edge_level() const { return localization == Localization::edge || localization == Localization::both; }
    bool film() const { return localization == Localization::film; }
    std::size_t head_dim() const { return out_dim / heads; }
    std::size_t mlp_hidden() const { return gin_mlp_hidden ? gin_mlp_hidden : out_dim; }

    void validate() const {
        if (in_dim == 0 || out_dim == 0) throw Error("layer: dimensions must be positive");
        if (heads < 1) throw Error("layer: heads must be >= 1");
        if (kind != ArchKind::gat && heads != 1) throw Error("layer: heads > 1 requires gat");
        if (out_dim % heads != 0) throw Error("layer: out_dim must be divisible by heads");
        if (gate_bottleneck && (*gate_bottleneck == 0 || *gate_bottleneck > in_dim))
            throw Error("layer: gate_bottleneck must be in [1, in_dim]");
    }
};

/// A gate generator: one dense map, or two chained maps through a
/// bottleneck of width k with the gate activation between them.
template <class T>
struct GateMap {
    Tensor<T> first;   // (k x d_in), or (d_out x d_in) when unfactored
    Tensor<T> second;  // (d_out x k) when factored, else empty

    bool factored() const { return second.size() > 0; }
};

template <class T>
struct LayerParams {
    std::vector<Tensor<T>> W;          // per head, (head_dim x d_in)
    std::vector<Tensor<T>> attention;  // gat, per head (1 x 2 head_dim): target half, source half
    Tensor<T> mlp1, mlp2;              // gin
    GateMap<T> node_scale, node_shift; // M_a, M_b
    Tensor<T> edge_scale, edge_shift;  // N_a, N_b (d_out x 2 d_in): target half, source half
    Tensor<T> film_scale, film_shift;  // (d_out x d_in)

    /// Visits every learnable tensor with its name suffix and group.
    template <class F>
    void for_each(F&& f) {
        for (std::size_t h = 0; h < W.size(); ++h)
            f(W.size() > 1 ? "head" + std::to_string(h) + ".W" : std::string("W"), W[h], ParamGroup::global);
        for (std::size_t h = 0; h < attention.size(); ++h)
            f(attention.size() > 1 ? "head" + std::to_string(h) + ".attention" : std::string("attention"),
              attention[h], ParamGroup::global);
        if (mlp1.size()) f("mlp1", mlp1, ParamGroup::global);
        if (mlp2.size()) f("mlp2", mlp2, ParamGroup::global);
        auto gate = [&](const std::string& name, GateMap<T>& g) {
            if (!g.first.size()) return;
            if (g.factored()) {
                f(name + ".first", g.first, ParamGroup::localization);
                f(name + ".second", g.second, ParamGroup::localization);
            } else {
                f(name, g.first, ParamGroup::localization);
            }
        };
        gate("node_scale", node_scale);
        gate("node_shift", node_shift);
        if (edge_scale.size()) f("edge_scale", edge_scale, ParamGroup::localization);
        if (edge_shift.size()) f("edge_shift", edge_shift, ParamGroup::localization);
        if (film_scale.size()) f("film_scale", film_scale, ParamGroup::localization);
        if (film_shift.size()) f("film_shift", film_shift, ParamGroup::localization);
    }
};

namespace detail {

template <class T, class Rng>
void glorot(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (T& v : t.data()) v = static_cast<T>(u(rng));
}

}  // namespace detail

/// Allocates a layer's parameters: Glorot-uniform global weights, zero
/// gate maps. The first factor of a bottlenecked gate is Glorot-initialized
/// so that gradients reach both factors; the second is zero, which keeps
/// every gate at identity (scale 1, shift 0) at initialization.
template <class T, class Rng>
LayerParams<T> init_layer_params(const LayerSpec& spec, Rng& rng) {
    spec.validate();
    LayerParams<T> p;
    const std::size_t din = spec.in_dim, dout = spec.out_dim, hd = spec.head_dim();
    for (std::size_t h = 0; h < spec.heads; ++h) {
        Tensor<T> w(hd, din, true);
        detail::glorot(w, din, hd, rng);
        p.W.push_back(w);
        if (spec.kind == ArchKind::gat) {
            Tensor<T> att(1, 2 * hd, true);
            detail::glorot(att, 2 * hd, 1, rng);
            p.attention.push_back(att);
        }
    }
    if (spec.kind == ArchKind::gin) {
        const std::size_t mh = spec.mlp_hidden();
        p.mlp1 = Tensor<T>(mh, dout, true);
        p.mlp2 = Tensor<T>(dout, mh, true);
        detail::glorot(p.mlp1, dout, mh, rng);
        detail::glorot(p.mlp2, mh, dout, rng);
    }
    if (spec.node_level()) {
        auto make = [&]() {
            GateMap<T> g;
            if (spec.gate_bottleneck) {
                const std::size_t k = *spec.gate_bottleneck;
                g.first = Tensor<T>(k, din, true);
                detail::glorot(g.first, din, k, rng);
                g.second = Tensor<T>(din, k, true);
            } else {
                g.first = Tensor<T>(din, din, true);
            }
            return g;
        };
        p.node_scale = make();
        p.node_shift = make();
    }
    if (spec.edge_level()) {
        p.edge_scale = Tensor<T>(dout, 2 * din, true);
        p.edge_shift = Tensor<T>(dout, 2 * din, true);
    }
    if (spec.film()) {
        p.film_scale = Tensor<T>(dout, din, true);
        p.film_shift = Tensor<T>(dout, din, true);
    }
    return p;
}

/// Scale and shift tensors produced by one forward pass. Scales are
/// centered at 1 and shifts at 0.
template <class T>
struct GateState {
    std::vector<Tensor<T>> scales;
    std::vector<Tensor<T>> shifts;

    std::size_t scale_elements() const {
        std::size_t n = 0;
        for (const auto& t : scales) n += t.size();
        return n;
    }
    std::size_t shift_elements() const {
        std::size_t n = 0;
        for (const auto& t : shifts) n += t.size();
        return n;
    }
};

template <class T>
struct GatePair {
    Tensor<T> scale;
    Tensor<T> shift;
};

template <class T>
Tensor<T> activate(Tape<T>& tape, const Tensor<T>& x, Activation a) {
    switch (a) {
        case Activation::relu: return ops::relu(tape, x);
        case Activation::tanh: return ops::tanh(tape, x);
        case Activation::identity: return x;
    }
    return x;
}

/// Row v = mean of h over C_v.
template <class T>
Tensor<T> context_mean(Tape<T>& tape, const Tensor<T>& h, const GraphBundle& g) {
    if (h.rows() != g.num_nodes)
        throw ShapeError("context_mean: " + std::to_string(h.rows()) + " rows for " +
                         std::to_string(g.num_nodes) + " nodes");
    return ops::scatter(tape, ops::Reduce::mean, ops::gather_rows(tape, h, g.ctx_src), g.ctx_tgt, g.num_nodes);
}

namespace detail {

// act(pre [-> act -> second]) where pre is the first map already applied
template <class T>
Tensor<T> finish_gate(Tape<T>& tape, const Tensor<T>& pre, const GateMap<T>& m, Activation act, bool plus_one) {
    Tensor<T> x = pre;
    if (m.factored()) x = ops::matmul_t(tape, activate(tape, x, act), m.second);
    x = activate(tape, x, act);
    return plus_one ? ops::add_scalar(tape, x, T(1)) : x;
}

}  // namespace detail

/// a_v = act(c M_a^T) + 1 and b_v = act(c M_b^T) from pooled context rows c.
template <class T>
GatePair<T> node_gates(Tape<T>& tape, const Tensor<T>& c, const GateMap<T>& scale, const GateMap<T>& shift,
                       Activation act) {
    if (c.cols() != scale.first.cols() || c.cols() != shift.first.cols())
        throw ShapeError("node_gates: context width does not match gate input width");
    return {detail::finish_gate(tape, ops::matmul_t(tape, c, scale.first), scale, act, true),
            detail::finish_gate(tape, ops::matmul_t(tape, c, shift.first), shift, act, false)};
}

/// node_gates(context_mean(h)) computed as context_mean(h M^T): the first
/// map is linear, so pooling commutes with it and runs at width k.
template <class T>
GatePair<T> node_gates_from_layer_input(Tape<T>& tape, const Tensor<T>& h, const GraphBundle& g,
                                        const GateMap<T>& scale, const GateMap<T>& shift, Activation act) {
    if (h.cols() != scale.first.cols() || h.cols() != shift.first.cols())
        throw ShapeError("node_gates: input width does not match gate input width");
    auto pa = context_mean(tape, ops::matmul_t(tape, h, scale.first), g);
    auto pb = context_mean(tape, ops::matmul_t(tape, h, shift.first), g);
    return {detail::finish_gate(tape, pa, scale, act, true), detail::finish_gate(tape, pb, shift, act, false)};
}

/// Row-aligned form of the localized message: row e is
/// (W (.) a_e^T-broadcast + b_e^T-broadcast) h_e, computed as
/// W (a_e * h_e) + (b_e . h_e) 1.
template <class T>
Tensor<T> localized_message(Tape<T>& tape, const Tensor<T>& W, const Tensor<T>& h_rows, const Tensor<T>& a_rows,
                            const Tensor<T>& b_rows) {
    if (h_rows.rows() != a_rows.rows() || h_rows.rows() != b_rows.rows())
        throw ShapeError("localized_message: row count mismatch");
    ops::Index id(h_rows.rows());
    std::iota(id.begin(), id.end(), std::size_t{0});
    return ops::localized_messages(tape, W, h_rows, a_rows, b_rows, id, id);
}

/// Edge gates from the concatenated endpoint context [h_v, h_u] (target
/// first): a_uv = act(c N_a^T) + 1, b_uv = act(c N_b^T).
template <class T>
GatePair<T> edge_gates(Tape<T>& tape, const Tensor<T>& hv_rows, const Tensor<T>& hu_rows, const Tensor<T>& n_scale,
                       const Tensor<T>& n_shift, Activation act) {
    if (hv_rows.rows() != hu_rows.rows() || hv_rows.cols() != hu_rows.cols())
        throw ShapeError("edge_gates: endpoint rows must have equal shape");
    if (n_scale.cols() != 2 * hv_rows.cols() || n_shift.cols() != 2 * hv_rows.cols())
        throw ShapeError("edge_gates: gate matrices must have 2 * d_in columns");
    auto c = ops::concat_cols(tape, std::vector<Tensor<T>>{hv_rows, hu_rows});
    auto a = ops::add_scalar(tape, activate(tape, ops::matmul_t(tape, c, n_scale), act), T(1));
    auto b = activate(tape, ops::matmul_t(tape, c, n_shift), act);
    return {a, b};
}

namespace detail {

// [h_v, h_u] N^T = h_v N_tgt^T + h_u N_src^T, projected per node then gathered
template <class T>
Tensor<T> edge_projection(Tape<T>& tape, const Tensor<T>& h, const GraphBundle& g, const Tensor<T>& n) {
    const std::size_t d = h.cols();
    auto t = ops::matmul_t(tape, h, ops::slice_cols(tape, n, 0, d));
    auto s = ops::matmul_t(tape, h, ops::slice_cols(tape, n, d, d));
    return ops::add(tape, ops::gather_rows(tape, t, g.ctx_tgt), ops::gather_rows(tape, s, g.ctx_src));
}

}  // namespace detail

/// edge_gates over every context edge of the graph, without materializing
/// the E' x 2 d_in concatenation.
template <class T>
GatePair<T> edge_gates_on_graph(Tape<T>& tape, const Tensor<T>& h, const GraphBundle& g, const Tensor<T>& n_scale,
                                const Tensor<T>& n_shift, Activation act) {
    if (n_scale.cols() != 2 * h.cols() || n_shift.cols() != 2 * h.cols())
        throw ShapeError("edge_gates: gate matrices must have 2 * d_in columns");
    auto a = ops::add_scalar(tape, activate(tape, detail::edge_projection(tape, h, g, n_scale), act), T(1));
    auto b = activate(tape, detail::edge_projection(tape, h, g, n_shift), act);
    return {a, b};
}

/// Per-edge weights of the symmetric GCN normalization 1/sqrt(|C_u| |C_v|).
template <class T>
std::vector<T> sym_norm_weights(const GraphBundle& g) {
    std::vector<T> w(g.num_context_edges());
    for (std::size_t e = 0; e < w.size(); ++e)
        w[e] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(g.context.size_of(g.ctx_src[e]) *
                                                                g.context.size_of(g.ctx_tgt[e]))));
    return w;
}

/// Options that only matter for testing the reductions.
struct ForwardOptions {
    /// Evaluate the node-level path even when gates would be identity.
    bool force_identity_gates = false;
};

/// One aggregation layer over the local contexts C_v:
///
///   h'_v = act(Aggr({ m_uv : u in C_v }))
///
/// where m_uv = W_v h_u with the node-localized weight when node-level
/// localization is on (else W h_u), then * a_uv + b_uv when edge-level is on.
/// Aggr is context mean or symmetric-normalized sum (gcn), attention-weighted
/// sum (gat) or sum followed by a two-layer MLP (gin). Generated gates are
/// appended to `gates`.
template <class T>
Tensor<T> layer_forward(Tape<T>& tape, const Tensor<T>& h, const GraphBundle& g, const LayerSpec& spec,
                        const LayerParams<T>& p, GateState<T>& gates, const ForwardOptions& opt = {}) {
    if (h.rows() != g.num_nodes || h.cols() != spec.in_dim)
        throw ShapeError("layer_forward: input is " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                         ", expected " + std::to_string(g.num_nodes) + "x" + std::to_string(spec.in_dim));
    const std::size_t N = g.num_nodes, hd = spec.head_dim();
    const auto& src = g.ctx_src;
    const auto& tgt = g.ctx_tgt;

    std::optional<GatePair<T>> node, edge, film;
    if (spec.node_level()) {
        node = node_gates_from_layer_input(tape, h, g, p.node_scale, p.node_shift, spec.gate_activation);
        gates.scales.push_back(node->scale);
        gates.shifts.push_back(node->shift);
    } else if (opt.force_identity_gates) {
        node = GatePair<T>{Tensor<T>::filled(N, spec.in_dim, T(1)), Tensor<T>::zeros(N, spec.in_dim)};
    }
    if (spec.edge_level()) {
        edge = edge_gates_on_graph(tape, h, g, p.edge_scale, p.edge_shift, spec.gate_activation);
        gates.scales.push_back(edge->scale);
        gates.shifts.push_back(edge->shift);
    }
    if (spec.film()) {
        auto s = ops::add_scalar(tape, activate(tape, ops::matmul_t(tape, h, p.film_scale), spec.gate_activation), T(1));
        auto b = activate(tape, ops::matmul_t(tape, h, p.film_shift), spec.gate_activation);
        film = GatePair<T>{s, b};
        gates.scales.push_back(s);
        gates.shifts.push_back(b);
    }

    auto head_slice = [&](const Tensor<T>& t, std::size_t head) {
        return spec.heads == 1 ? t : ops::slice_cols(tape, t, head * hd, hd);
    };

    std::vector<Tensor<T>> outs;
    for (std::size_t head = 0; head < spec.heads; ++head) {
        const Tensor<T>& W = p.W[head];
        std::optional<Tensor<T>> z;  // h W^T, needed unless node-level
        Tensor<T> m;
        if (node) {
            m = ops::localized_messages(tape, W, h, node->scale, node->shift, src, tgt);
        } else {
            z = ops::matmul_t(tape, h, W);
            m = ops::gather_rows(tape, *z, src);
        }
        if (edge) m = ops::add(tape, ops::mul(tape, m, head_slice(edge->scale, head)), head_slice(edge->shift, head));
        if (film) {
            m = ops::mul(tape, m, ops::gather_rows(tape, head_slice(film->scale, head), tgt));
            m = ops::add(tape, m, ops::gather_rows(tape, head_slice(film->shift, head), tgt));
        }

        Tensor<T> agg;
        switch (spec.kind) {
            case ArchKind::gcn:
                if (spec.gcn_norm == GcnNorm::context_mean) {
                    agg = ops::scatter(tape, ops::Reduce::mean, m, tgt, N);
                } else {
                    agg = ops::scatter(tape, ops::Reduce::sum, ops::scale_rows_const(tape, m, sym_norm_weights<T>(g)),
                                       tgt, N);
                }
                break;
            case ArchKind::gat: {
                if (!z) z = ops::matmul_t(tape, h, W);
                const Tensor<T>& att = p.attention[head];
                auto s_tgt = ops::matmul_t(tape, *z, ops::slice_cols(tape, att, 0, hd));
                auto s_src = ops::matmul_t(tape, *z, ops::slice_cols(tape, att, hd, hd));
                auto e = ops::add(tape, ops::gather_rows(tape, s_tgt, tgt), ops::gather_rows(tape, s_src, src));
                e = ops::leaky_relu(tape, e, static_cast<T>(spec.attention_slope));
                auto alpha = ops::segment_softmax(tape, e, tgt, N);
                agg = ops::scatter(tape, ops::Reduce::sum, ops::scale_rows(tape, m, alpha), tgt, N);
                break;
            }
            case ArchKind::gin: {
                agg = ops::scatter(tape, ops::Reduce::sum, m, tgt, N);
                agg = activate(tape, ops::matmul_t(tape, agg, p.mlp1), spec.gin_mlp_activation);
                agg = ops::matmul_t(tape, agg, p.mlp2);
                break;
            }
        }
        outs.push_back(agg);
    }
    Tensor<T> out = outs.size() == 1 ? outs.front() : ops::concat_cols(tape, outs);
    return activate(tape, out, spec.activation);
}

/// The FiLM comparison layer: messages W h_u are modulated by gamma_v and
/// beta_v generated from the target's own representation h_v only.
template <class T>
Tensor<T> film_layer_forward(Tape<T>& tape, const Tensor<T>& h, const GraphBundle& g, const LayerSpec& spec,
                             const LayerParams<T>& p, GateState<T>& gates) {
    if (!spec.film()) throw Error("film_layer_forward: layer localization must be film");
    return layer_forward(tape, h, g, spec, p, gates);
}

}  // namespace lgnn
