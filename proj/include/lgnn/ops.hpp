#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lgnn/tensor.hpp"

namespace lgnn::ops {

// Every op takes the tape first. Outputs require grad iff the tape is
// recording and at least one input requires grad; only then is a backward
// rule recorded.

/// C = A * B.
///
/// Zero entries of A are skipped in the forward and in dB, so sparse
/// bag-of-words inputs cost O(nnz) rather than O(rows * cols).
template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const bool track = tape.wants(a, b);
    Tensor<T> c(m, n, track);
    auto av = a.data();
    auto bv = b.data();
    auto cv = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = cv.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = av[i * k + p];
            if (aip == T(0)) continue;
            const T* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    lgnn::detail::check_finite(c, "matmul");
    if (track) {
        tape.record("matmul", {a.id(), b.id()}, c.id(), [a, b, c, m, k, n]() mutable {
            if (!c.has_grad()) return;
            auto g = c.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                auto bv = b.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        T s = 0;
                        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                        ga[i * k + p] += s;
                    }
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                auto av = a.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const T aip = av[i * k + p];
                        if (aip == T(0)) continue;
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                    }
            }
        });
    }
    return c;
}

/// C = A * B^T, the layout used for weights stored as (out x in).
template <class T>
Tensor<T> matmul_t(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_t: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    const bool track = tape.wants(a, b);
    Tensor<T> c(m, n, track);
    auto av = a.data();
    auto bv = b.data();
    auto cv = c.data();
    if (n <= 16) {
        // narrow output: walk A once, skipping zeros
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = cv.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T aip = av[i * k + p];
                if (aip == T(0)) continue;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * bv[j * k + p];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T s = 0;
                const T* arow = av.data() + i * k;
                const T* brow = bv.data() + j * k;
                for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                cv[i * n + j] = s;
            }
    }
    lgnn::detail::check_finite(c, "matmul_t");
    if (track) {
        tape.record("matmul_t", {a.id(), b.id()}, c.id(), [a, b, c, m, k, n]() mutable {
            if (!c.has_grad()) return;
            auto g = c.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                auto bv = b.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const T gij = g[i * n + j];
                        if (gij == T(0)) continue;
                        T* garow = ga.data() + i * k;
                        const T* brow = bv.data() + j * k;
                        for (std::size_t p = 0; p < k; ++p) garow[p] += gij * brow[p];
                    }
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                auto av = a.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const T aip = av[i * k + p];
                        if (aip == T(0)) continue;
                        for (std::size_t j = 0; j < n; ++j) gb[j * k + p] += g[i * n + j] * aip;
                    }
            }
        });
    }
    return c;
}

enum class Binary { add, sub, mul };

namespace detail {

template <class T>
Tensor<T> binary(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, Binary kind,
                 const char* name) {
    // b may be a 1 x cols row vector broadcast over the rows of a
    const bool row_bcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
    if (!row_bcast) lgnn::detail::require_same_shape(a, b, name);
    const std::size_t r = a.rows(), c = a.cols();
    const bool track = tape.wants(a, b);
    Tensor<T> out(r, c, track);
    auto av = a.data();
    auto bv = b.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const T x = av[i * c + j];
            const T y = bv[row_bcast ? j : i * c + j];
            switch (kind) {
                case Binary::add: ov[i * c + j] = x + y; break;
                case Binary::sub: ov[i * c + j] = x - y; break;
                case Binary::mul: ov[i * c + j] = x * y; break;
            }
        }
    lgnn::detail::check_finite(out, name);
    if (track) {
        tape.record(name, {a.id(), b.id()}, out.id(), [a, b, out, kind, row_bcast, r, c]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                auto bv = b.data();
                for (std::size_t i = 0; i < r * c; ++i)
                    ga[i] += kind == Binary::mul ? g[i] * bv[row_bcast ? i % c : i] : g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                auto av = a.data();
                for (std::size_t i = 0; i < r * c; ++i) {
                    const T d = kind == Binary::add   ? g[i]
                                : kind == Binary::sub ? -g[i]
                                                      : g[i] * av[i];
                    gb[row_bcast ? i % c : i] += d;
                }
            }
        });
    }
    return out;
}

}  // namespace detail

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(tape, a, b, Binary::add, "add");
}
template <class T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(tape, a, b, Binary::sub, "sub");
}
template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(tape, a, b, Binary::mul, "mul");
}

enum class Unary { relu, tanh, leaky_relu, exp, log };

inline Unary parse_unary(const std::string& s) {
    if (s == "relu") return Unary::relu;
    if (s == "tanh") return Unary::tanh;
    if (s == "leaky_relu") return Unary::leaky_relu;
    if (s == "exp") return Unary::exp;
    if (s == "log") return Unary::log;
    throw Error("unknown unary op '" + s + "'");
}

/// Pointwise activation. `slope` is used by leaky_relu only.
template <class T>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& x, Unary kind, T slope = T(0.2)) {
    const bool track = tape.wants(x);
    Tensor<T> out(x.rows(), x.cols(), track);
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const T v = xv[i];
        switch (kind) {
            case Unary::relu: ov[i] = v > T(0) ? v : T(0); break;
            case Unary::tanh: ov[i] = std::tanh(v); break;
            case Unary::leaky_relu: ov[i] = v > T(0) ? v : slope * v; break;
            case Unary::exp: ov[i] = std::exp(v); break;
            case Unary::log:
                if (!(v > T(0))) throw NumericError("log: non-positive entry");
                ov[i] = std::log(v);
                break;
        }
    }
    lgnn::detail::check_finite(out, "unary");
    if (track) {
        tape.record("unary", {x.id()}, out.id(), [x, out, kind, slope]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad();
            auto xv = x.data();
            auto ov = out.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                T d = 0;
                switch (kind) {
                    case Unary::relu: d = xv[i] > T(0) ? T(1) : T(0); break;
                    case Unary::tanh: d = T(1) - ov[i] * ov[i]; break;
                    case Unary::leaky_relu: d = xv[i] > T(0) ? T(1) : slope; break;
                    case Unary::exp: d = ov[i]; break;
                    case Unary::log: d = T(1) / xv[i]; break;
                }
                gx[i] += g[i] * d;
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
    return unary(tape, x, Unary::relu);
}
template <class T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) {
    return unary(tape, x, Unary::tanh);
}
template <class T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope) {
    return unary(tape, x, Unary::leaky_relu, slope);
}
template <class T>
Tensor<T> exp(Tape<T>& tape, const Tensor<T>& x) {
    return unary(tape, x, Unary::exp);
}
template <class T>
Tensor<T> log(Tape<T>& tape, const Tensor<T>& x) {
    return unary(tape, x, Unary::log);
}

/// x * s + c elementwise with constant s and c.
template <class T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& x, T s, T c) {
    const bool track = tape.wants(x);
    Tensor<T> out(x.rows(), x.cols(), track);
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] * s + c;
    lgnn::detail::check_finite(out, "affine");
    if (track) {
        tape.record("affine", {x.id()}, out.id(), [x, out, s]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
        });
    }
    return out;
}

template <class T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& x, T c) {
    return affine(tape, x, T(1), c);
}

/// Row-wise softmax with per-row max subtraction.
template <class T>
Tensor<T> softmax_rows(Tape<T>& tape, const Tensor<T>& x) {
    const std::size_t r = x.rows(), c = x.cols();
    const bool track = tape.wants(x);
    Tensor<T> out(r, c, track);
    for (std::size_t i = 0; i < r; ++i) {
        auto xr = x.row(i);
        auto orow = out.row(i);
        T mx = xr.empty() ? T(0) : xr[0];
        for (T v : xr) mx = std::max(mx, v);
        T z = 0;
        for (std::size_t j = 0; j < c; ++j) z += (orow[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < c; ++j) orow[j] /= z;
    }
    lgnn::detail::check_finite(out, "softmax_rows");
    if (track) {
        tape.record("softmax_rows", {x.id()}, out.id(), [x, out, r, c]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad();
            auto y = out.data();
            for (std::size_t i = 0; i < r; ++i) {
                T dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                for (std::size_t j = 0; j < c; ++j)
                    gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
            }
        });
    }
    return out;
}

/// Sum of all entries, as a 1x1 tensor.
template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
    const bool track = tape.wants(x);
    Tensor<T> out(1, 1, track);
    T s = 0;
    for (T v : x.data()) s += v;
    out(0, 0) = s;
    lgnn::detail::check_finite(out, "sum");
    if (track) {
        tape.record("sum", {x.id()}, out.id(), [x, out]() mutable {
            if (!out.has_grad()) return;
            const T g = out.grad()[0];
            for (T& gx : x.grad()) gx += g;
        });
    }
    return out;
}

/// Sum of squared entries of (x - center), as a 1x1 tensor.
template <class T>
Tensor<T> sum_squares(Tape<T>& tape, const Tensor<T>& x, T center = T(0)) {
    const bool track = tape.wants(x);
    Tensor<T> out(1, 1, track);
    T s = 0;
    for (T v : x.data()) s += (v - center) * (v - center);
    out(0, 0) = s;
    lgnn::detail::check_finite(out, "sum_squares");
    if (track) {
        tape.record("sum_squares", {x.id()}, out.id(), [x, out, center]() mutable {
            if (!out.has_grad()) return;
            const T g = out.grad()[0];
            auto gx = x.grad();
            auto xv = x.data();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += T(2) * g * (xv[i] - center);
        });
    }
    return out;
}

/// Columns [begin, begin + count) of x.
template <class T>
Tensor<T> slice_cols(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t count) {
    if (begin + count > x.cols()) throw ShapeError("slice_cols: range exceeds columns");
    const std::size_t r = x.rows(), c = x.cols();
    const bool track = tape.wants(x);
    Tensor<T> out(r, count, track);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
    if (track) {
        tape.record("slice_cols", {x.id()}, out.id(), [x, out, r, c, begin, count]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < count; ++j) gx[i * c + begin + j] += g[i * count + j];
        });
    }
    return out;
}

/// Horizontal concatenation of tensors with equal row counts.
template <class T>
Tensor<T> concat_cols(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = parts.front().rows();
    std::size_t c = 0;
    bool track = false;
    std::vector<const void*> ids;
    for (const auto& p : parts) {
        if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch");
        c += p.cols();
        track = track || tape.wants(p);
        ids.push_back(p.id());
    }
    Tensor<T> out(r, c, track);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p(i, j);
        off += p.cols();
    }
    if (track) {
        tape.record("concat_cols", std::move(ids), out.id(), [parts, out, r, c]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            std::size_t off = 0;
            for (auto& p : parts) {
                if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < p.cols(); ++j)
                            gp[i * p.cols() + j] += g[i * c + off + j];
                }
                off += p.cols();
            }
        });
    }
    return out;
}

/// Scales row i of x by w(i, 0). Both operands are differentiable.
template <class T>
Tensor<T> scale_rows(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w) {
    if (w.rows() != x.rows() || w.cols() != 1) throw ShapeError("scale_rows: weight must be rows x 1");
    const std::size_t r = x.rows(), c = x.cols();
    const bool track = tape.wants(x, w);
    Tensor<T> out(r, c, track);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) = x(i, j) * w(i, 0);
    lgnn::detail::check_finite(out, "scale_rows");
    if (track) {
        tape.record("scale_rows", {x.id(), w.id()}, out.id(), [x, w, out, r, c]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            if (x.requires_grad()) {
                auto gx = x.grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] * w(i, 0);
            }
            if (w.requires_grad()) {
                auto gw = w.grad();
                for (std::size_t i = 0; i < r; ++i) {
                    T s = 0;
                    for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * x(i, j);
                    gw[i] += s;
                }
            }
        });
    }
    return out;
}

/// Scales row i of x by the constant weights[i].
template <class T>
Tensor<T> scale_rows_const(Tape<T>& tape, const Tensor<T>& x, std::vector<T> weights) {
    if (weights.size() != x.rows()) throw ShapeError("scale_rows_const: weight count mismatch");
    const std::size_t r = x.rows(), c = x.cols();
    const bool track = tape.wants(x);
    Tensor<T> out(r, c, track);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) = x(i, j) * weights[i];
    if (track) {
        tape.record("scale_rows_const", {x.id()}, out.id(),
                    [x, out, w = std::move(weights), r, c]() mutable {
                        if (!out.has_grad()) return;
                        auto g = out.grad();
                        auto gx = x.grad();
                        for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] * w[i];
                    });
    }
    return out;
}

/// Inverted dropout: zeroes entries with probability `rate` and scales
/// survivors by 1 / (1 - rate).
template <class T, class Rng>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw Error("dropout: rate must be < 1");
    const T keep_scale = T(1.0 / (1.0 - rate));
    std::bernoulli_distribution drop(rate);
    std::vector<T> mask(x.size());
    for (auto& m : mask) m = drop(rng) ? T(0) : keep_scale;
    const bool track = tape.wants(x);
    Tensor<T> out(x.rows(), x.cols(), track);
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] * mask[i];
    if (track) {
        tape.record("dropout", {x.id()}, out.id(), [x, out, mask = std::move(mask)]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
        });
    }
    return out;
}

/// -sum over `nodes` of ln(max(probs(v, labels[v]), eps)).
///
/// Entries clamped at eps contribute no gradient.
template <class T>
Tensor<T> nll_from_probs(Tape<T>& tape, const Tensor<T>& probs, const std::vector<int>& labels,
                         const std::vector<std::size_t>& nodes, T eps = T(1e-12)) {
    if (labels.size() != probs.rows()) throw ShapeError("nll: label count mismatch");
    const bool track = tape.wants(probs);
    Tensor<T> out(1, 1, track);
    T s = 0;
    for (std::size_t v : nodes) {
        if (v >= probs.rows()) throw IndexError("nll: node index out of range");
        const int y = labels[v];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
            throw IndexError("nll: label out of range");
        s -= std::log(std::max(probs(v, static_cast<std::size_t>(y)), eps));
    }
    out(0, 0) = s;
    lgnn::detail::check_finite(out, "nll");
    if (track) {
        tape.record("nll", {probs.id()}, out.id(), [probs, out, labels, nodes, eps]() mutable {
            if (!out.has_grad()) return;
            const T g = out.grad()[0];
            auto gp = probs.grad();
            const std::size_t c = probs.cols();
            for (std::size_t v : nodes) {
                const auto y = static_cast<std::size_t>(labels[v]);
                const T p = probs(v, y);
                if (p > eps) gp[v * c + y] -= g / p;
            }
        });
    }
    return out;
}

}  // namespace lgnn::ops
