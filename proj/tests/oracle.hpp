#pragma once

// Straight-loop reference implementation of one aggregation layer, written
// independently of the tape kernels.

#include <cmath>
#include <vector>

#include "lgnn/lgnn.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const lgnn::Tensor<double>& t) {
    Mat m(t.rows(), Vec(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
    return m;
}

inline Vec matvec(const Mat& m, const Vec& x) {
    Vec y(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += m[i][j] * x[j];
    return y;
}

inline double act(double x, lgnn::Activation a) {
    switch (a) {
        case lgnn::Activation::relu: return x > 0 ? x : 0;
        case lgnn::Activation::tanh: return std::tanh(x);
        case lgnn::Activation::identity: return x;
    }
    return x;
}

inline Vec act(Vec v, lgnn::Activation a, double plus = 0.0) {
    for (auto& x : v) x = act(x, a) + plus;
    return v;
}

inline Vec gate(const lgnn::GateMap<double>& g, const Vec& c, lgnn::Activation a, double plus) {
    if (g.factored()) return act(matvec(to_mat(g.second), act(matvec(to_mat(g.first), c), a)), a, plus);
    return act(matvec(to_mat(g.first), c), a, plus);
}

inline Mat layer(const lgnn::GraphBundle& g, const lgnn::LayerSpec& s, const lgnn::LayerParams<double>& p,
                 const Mat& h) {
    const std::size_t n = g.num_nodes, din = s.in_dim, hd = s.head_dim();
    Mat a(n, Vec(din, 1.0)), b(n, Vec(din, 0.0));
    if (s.node_level()) {
        for (std::size_t v = 0; v < n; ++v) {
            Vec c(din, 0.0);
            auto ctx = g.context.of(v);
            for (std::size_t u : ctx)
                for (std::size_t j = 0; j < din; ++j) c[j] += h[u][j] / static_cast<double>(ctx.size());
            a[v] = gate(p.node_scale, c, s.gate_activation, 1.0);
            b[v] = gate(p.node_shift, c, s.gate_activation, 0.0);
        }
    }
    Mat out(n, Vec(s.out_dim, 0.0));
    for (std::size_t head = 0; head < s.heads; ++head) {
        const Mat W = to_mat(p.W[head]);
        for (std::size_t v = 0; v < n; ++v) {
            auto ctx = g.context.of(v);
            std::vector<Vec> msgs;
            for (std::size_t u : ctx) {
                Vec m(hd, 0.0);
                for (std::size_t i = 0; i < hd; ++i)
                    for (std::size_t j = 0; j < din; ++j) m[i] += (W[i][j] * a[v][j] + b[v][j]) * h[u][j];
                if (s.edge_level()) {
                    Vec cat = h[v];
                    cat.insert(cat.end(), h[u].begin(), h[u].end());
                    Vec ea = act(matvec(to_mat(p.edge_scale), cat), s.gate_activation, 1.0);
                    Vec eb = act(matvec(to_mat(p.edge_shift), cat), s.gate_activation, 0.0);
                    for (std::size_t i = 0; i < hd; ++i) m[i] = m[i] * ea[head * hd + i] + eb[head * hd + i];
                }
                if (s.film()) {
                    Vec ga = act(matvec(to_mat(p.film_scale), h[v]), s.gate_activation, 1.0);
                    Vec gb = act(matvec(to_mat(p.film_shift), h[v]), s.gate_activation, 0.0);
                    for (std::size_t i = 0; i < hd; ++i) m[i] = m[i] * ga[head * hd + i] + gb[head * hd + i];
                }
                msgs.push_back(m);
            }
            Vec agg(hd, 0.0);
            switch (s.kind) {
                case lgnn::ArchKind::gcn:
                    for (std::size_t k = 0; k < ctx.size(); ++k) {
                        const double w = s.gcn_norm == lgnn::GcnNorm::context_mean
                                             ? 1.0 / static_cast<double>(ctx.size())
                                             : 1.0 / std::sqrt(static_cast<double>(ctx.size() *
                                                                                   g.context.size_of(ctx[k])));
                        for (std::size_t i = 0; i < hd; ++i) agg[i] += w * msgs[k][i];
                    }
                    break;
                case lgnn::ArchKind::gat: {
                    const Vec att = to_mat(p.attention[head])[0];
                    const Vec zv = matvec(W, h[v]);
                    Vec e;
                    for (std::size_t u : ctx) {
                        const Vec zu = matvec(W, h[u]);
                        double s_ = 0;
                        for (std::size_t i = 0; i < hd; ++i) s_ += att[i] * zv[i] + att[hd + i] * zu[i];
                        e.push_back(s_ > 0 ? s_ : s.attention_slope * s_);
                    }
                    double z = 0;
                    for (double x : e) z += std::exp(x);
                    for (std::size_t k = 0; k < ctx.size(); ++k)
                        for (std::size_t i = 0; i < hd; ++i) agg[i] += std::exp(e[k]) / z * msgs[k][i];
                    break;
                }
                case lgnn::ArchKind::gin: {
                    for (const auto& m : msgs)
                        for (std::size_t i = 0; i < hd; ++i) agg[i] += m[i];
                    agg = matvec(to_mat(p.mlp2), act(matvec(to_mat(p.mlp1), agg), s.gin_mlp_activation));
                    break;
                }
            }
            for (std::size_t i = 0; i < hd; ++i) out[v][head * hd + i] = act(agg[i], s.activation);
        }
    }
    return out;
}

}  // namespace oracle
