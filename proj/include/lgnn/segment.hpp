#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lgnn/tensor.hpp"

namespace lgnn::ops {

using Index = std::vector<std::size_t>;

namespace detail {

inline void check_indices(const Index& idx, std::size_t bound, const char* op) {
    for (std::size_t i : idx) {
        if (i >= bound) {
            throw IndexError(std::string(op) + ": index " + std::to_string(i) + " out of range " +
                             std::to_string(bound));
        }
    }
}

}  // namespace detail

/// out.row(e) = x.row(idx[e]); backward scatter-adds into the source rows.
template <class T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, const Index& idx) {
    detail::check_indices(idx, x.rows(), "gather_rows");
    const std::size_t d = x.cols();
    const bool track = tape.wants(x);
    Tensor<T> out(idx.size(), d, track);
    for (std::size_t e = 0; e < idx.size(); ++e) std::copy_n(x.row(idx[e]).begin(), d, out.row(e).begin());
    if (track) {
        tape.record("gather_rows", {x.id()}, out.id(), [x, out, idx, d]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t e = 0; e < idx.size(); ++e)
                for (std::size_t j = 0; j < d; ++j) gx[idx[e] * d + j] += g[e * d + j];
        });
    }
    return out;
}

enum class Reduce { sum, mean };

/// Segment reduction: out.row(v) = sum (or mean) of values.row(e) over all
/// e with target[e] == v. Empty mean segments yield zero rows.
template <class T>
Tensor<T> scatter(Tape<T>& tape, Reduce op, const Tensor<T>& values, const Index& target,
                  std::size_t segments) {
    if (target.size() != values.rows()) throw ShapeError("scatter: target length != value rows");
    detail::check_indices(target, segments, "scatter");
    const std::size_t d = values.cols();
    std::vector<T> inv(segments, T(1));
    if (op == Reduce::mean) {
        std::vector<std::size_t> count(segments, 0);
        for (std::size_t v : target) ++count[v];
        for (std::size_t v = 0; v < segments; ++v) inv[v] = count[v] ? T(1) / T(count[v]) : T(0);
    }
    const bool track = tape.wants(values);
    Tensor<T> out(segments, d, track);
    for (std::size_t e = 0; e < target.size(); ++e) {
        auto src = values.row(e);
        auto dst = out.row(target[e]);
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    if (op == Reduce::mean) {
        for (std::size_t v = 0; v < segments; ++v)
            for (T& x : out.row(v)) x *= inv[v];
    }
    lgnn::detail::check_finite(out, "scatter");
    if (track) {
        tape.record("scatter", {values.id()}, out.id(), [values, out, target, inv, d]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gv = values.grad();
            for (std::size_t e = 0; e < target.size(); ++e) {
                const std::size_t v = target[e];
                for (std::size_t j = 0; j < d; ++j) gv[e * d + j] += g[v * d + j] * inv[v];
            }
        });
    }
    return out;
}

/// Softmax of an E x 1 score column within each target segment, with
/// per-segment max subtraction.
template <class T>
Tensor<T> segment_softmax(Tape<T>& tape, const Tensor<T>& scores, const Index& target,
                          std::size_t segments) {
    if (scores.cols() != 1) throw ShapeError("segment_softmax: scores must be E x 1");
    if (target.size() != scores.rows()) throw ShapeError("segment_softmax: target length != E");
    detail::check_indices(target, segments, "segment_softmax");
    const std::size_t E = scores.rows();
    std::vector<T> mx(segments, -std::numeric_limits<T>::infinity());
    for (std::size_t e = 0; e < E; ++e) mx[target[e]] = std::max(mx[target[e]], scores(e, 0));
    std::vector<T> z(segments, T(0));
    const bool track = tape.wants(scores);
    Tensor<T> out(E, 1, track);
    for (std::size_t e = 0; e < E; ++e) z[target[e]] += (out(e, 0) = std::exp(scores(e, 0) - mx[target[e]]));
    for (std::size_t e = 0; e < E; ++e) out(e, 0) /= z[target[e]];
    lgnn::detail::check_finite(out, "segment_softmax");
    if (track) {
        tape.record("segment_softmax", {scores.id()}, out.id(), [scores, out, target, segments, E]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gs = scores.grad();
            std::vector<T> dot(segments, T(0));
            for (std::size_t e = 0; e < E; ++e) dot[target[e]] += g[e] * out(e, 0);
            for (std::size_t e = 0; e < E; ++e) gs[e] += out(e, 0) * (g[e] - dot[target[e]]);
        });
    }
    return out;
}

/// Node-localized messages along edges (src[e] -> tgt[e]):
///
///   out.row(e) = W (a_v * h_u) + (b_v . h_u) 1,   u = src[e], v = tgt[e]
///
/// which equals (W * a_v^T-broadcast + b_v^T-broadcast) h_u, the localized
/// weight applied to h_u, without materializing a per-node matrix.
/// W is (d_out x d_in); h, a, b are node matrices (N x d_in).
///
/// When h does not require grad, zero entries of h are skipped entirely.
template <class T>
Tensor<T> localized_messages(Tape<T>& tape, const Tensor<T>& W, const Tensor<T>& h,
                             const Tensor<T>& a, const Tensor<T>& b, const Index& src,
                             const Index& tgt) {
    const std::size_t dout = W.rows(), din = W.cols();
    if (h.cols() != din || a.cols() != din || b.cols() != din)
        throw ShapeError("localized_messages: feature width mismatch");
    if (a.rows() != b.rows()) throw ShapeError("localized_messages: gate row mismatch");
    if (src.size() != tgt.size()) throw ShapeError("localized_messages: src/tgt length mismatch");
    detail::check_indices(src, h.rows(), "localized_messages");
    detail::check_indices(tgt, a.rows(), "localized_messages");
    const std::size_t E = src.size();

    // W^T for contiguous column access
    std::vector<T> wt(din * dout);
    for (std::size_t i = 0; i < dout; ++i)
        for (std::size_t j = 0; j < din; ++j) wt[j * dout + i] = W(i, j);

    const bool track = tape.wants(W, h, a, b);
    Tensor<T> out(E, dout, track);
    for (std::size_t e = 0; e < E; ++e) {
        auto hu = h.row(src[e]);
        auto av = a.row(tgt[e]);
        auto bv = b.row(tgt[e]);
        auto o = out.row(e);
        T shift = 0;
        for (std::size_t j = 0; j < din; ++j) {
            const T x = hu[j];
            if (x == T(0)) continue;
            const T t = av[j] * x;
            shift += bv[j] * x;
            const T* wc = wt.data() + j * dout;
            for (std::size_t i = 0; i < dout; ++i) o[i] += wc[i] * t;
        }
        for (std::size_t i = 0; i < dout; ++i) o[i] += shift;
    }
    lgnn::detail::check_finite(out, "localized_messages");
    if (track) {
        tape.record("localized_messages", {W.id(), h.id(), a.id(), b.id()}, out.id(),
                    [W, h, a, b, out, src, tgt, wt = std::move(wt), dout, din, E]() mutable {
                        if (!out.has_grad()) return;
                        auto g = out.grad();
                        const bool dense = h.requires_grad();
                        std::span<T> gW, gh, ga, gb;
                        if (W.requires_grad()) gW = W.grad();
                        if (h.requires_grad()) gh = h.grad();
                        if (a.requires_grad()) ga = a.grad();
                        if (b.requires_grad()) gb = b.grad();
                        for (std::size_t e = 0; e < E; ++e) {
                            const std::size_t u = src[e], v = tgt[e];
                            auto hu = h.row(u);
                            auto av = a.row(v);
                            auto bv = b.row(v);
                            const T* ge = g.data() + e * dout;
                            T gsum = 0;
                            for (std::size_t i = 0; i < dout; ++i) gsum += ge[i];
                            for (std::size_t j = 0; j < din; ++j) {
                                const T x = hu[j];
                                if (!dense && x == T(0)) continue;
                                const T* wc = wt.data() + j * dout;
                                T wg = 0;
                                for (std::size_t i = 0; i < dout; ++i) wg += wc[i] * ge[i];
                                if (!gW.empty()) {
                                    const T t = av[j] * x;
                                    for (std::size_t i = 0; i < dout; ++i) gW[i * din + j] += ge[i] * t;
                                }
                                if (!ga.empty()) ga[v * din + j] += wg * x;
                                if (!gb.empty()) gb[v * din + j] += gsum * x;
                                if (!gh.empty()) gh[u * din + j] += av[j] * wg + bv[j] * gsum;
                            }
                        }
                    });
    }
    return out;
}

}  // namespace lgnn::ops
