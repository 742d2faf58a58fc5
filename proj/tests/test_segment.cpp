#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using lgnn::Tape;
using lgnn::Tensor;
using testutil::random_tensor;
namespace ops = lgnn::ops;

namespace {

ops::Index random_index(std::size_t n, std::size_t bound, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, bound - 1);
    ops::Index idx(n);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

// Explicit per-node weight matrix W_v = W (.) (1 a_v^T) + 1 b_v^T.
std::vector<double> materialized_message(const Tensor<double>& W, std::span<const double> a,
                                         std::span<const double> b, std::span<const double> h) {
    const std::size_t dout = W.rows(), din = W.cols();
    std::vector<double> out(dout, 0.0);
    for (std::size_t i = 0; i < dout; ++i)
        for (std::size_t j = 0; j < din; ++j) out[i] += (W(i, j) * a[j] + b[j]) * h[j];
    return out;
}

}  // namespace

TEST(Gather, PicksRows) {
    auto x = Tensor<double>::from_rows({{1, 2}, {3, 4}, {5, 6}});
    Tape<double> tape;
    auto g = ops::gather_rows(tape, x, {2, 0, 2});
    EXPECT_EQ(g.rows(), 3u);
    EXPECT_DOUBLE_EQ(g(0, 1), 6);
    EXPECT_DOUBLE_EQ(g(1, 0), 1);
    EXPECT_THROW(ops::gather_rows(tape, x, {3}), lgnn::IndexError);
}

TEST(Scatter, SumAndMeanWithEmptySegment) {
    auto v = Tensor<double>::from_rows({{1, 1}, {2, 4}, {3, 5}});
    Tape<double> tape;
    auto s = ops::scatter(tape, ops::Reduce::sum, v, {0, 0, 2}, 3);
    EXPECT_DOUBLE_EQ(s(0, 0), 3);
    EXPECT_DOUBLE_EQ(s(0, 1), 5);
    EXPECT_DOUBLE_EQ(s(1, 0), 0);
    EXPECT_DOUBLE_EQ(s(2, 1), 5);
    auto m = ops::scatter(tape, ops::Reduce::mean, v, {0, 0, 2}, 3);
    EXPECT_DOUBLE_EQ(m(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(m(0, 1), 2.5);
    EXPECT_DOUBLE_EQ(m(1, 0), 0.0);
    EXPECT_DOUBLE_EQ(m(1, 1), 0.0);
    EXPECT_THROW(ops::scatter(tape, ops::Reduce::sum, v, {0, 1}, 3), lgnn::ShapeError);
    EXPECT_THROW(ops::scatter(tape, ops::Reduce::sum, v, {0, 1, 3}, 3), lgnn::IndexError);
}

TEST(Scatter, SumIsAdjointOfGather) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 7, e = 19, d = 3;
        auto idx = random_index(e, n, rng);
        auto x = random_tensor(e, d, rng), y = random_tensor(n, d, rng);
        Tape<double> tape;
        const double lhs = dot(ops::scatter(tape, ops::Reduce::sum, x, idx, n), y);
        const double rhs = dot(x, ops::gather_rows(tape, y, idx));
        EXPECT_NEAR(lhs, rhs, 1e-12);
    }
}

TEST(Scatter, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(22);
    auto idx = random_index(15, 6, rng);
    auto x = random_tensor(15, 4, rng, true), y = random_tensor(6, 4, rng);
    for (auto op : {ops::Reduce::sum, ops::Reduce::mean}) {
        auto r = lgnn::grad_check(
            [&](Tape<double>& t) { return ops::sum(t, ops::mul(t, ops::scatter(t, op, x, idx, 6), y)); }, {{"x", x}});
        EXPECT_LE(r.max_rel_err(), 1e-7);
    }
    auto w = random_tensor(15, 4, rng);
    auto yg = random_tensor(6, 4, rng, true);
    auto r = lgnn::grad_check([&](Tape<double>& t) { return ops::sum(t, ops::mul(t, ops::gather_rows(t, yg, idx), w)); },
                         {{"y", yg}});
    EXPECT_LE(r.max_rel_err(), 1e-7);
}

TEST(SegmentSoftmax, NormalizesPerSegmentAndMatchesBruteForce) {
    std::mt19937_64 rng(23);
    const std::size_t n = 5, e = 17;
    auto tgt = random_index(e, n, rng);
    tgt[0] = 0;
    auto s = random_tensor(e, 1, rng, true, -4, 4);
    Tape<double> tape;
    auto a = ops::segment_softmax(tape, s, tgt, n);
    for (std::size_t v = 0; v < n; ++v) {
        double z = 0, total = 0;
        for (std::size_t k = 0; k < e; ++k)
            if (tgt[k] == v) z += std::exp(s(k, 0));
        for (std::size_t k = 0; k < e; ++k)
            if (tgt[k] == v) {
                EXPECT_NEAR(a(k, 0), std::exp(s(k, 0)) / z, 1e-12);
                total += a(k, 0);
            }
        if (z > 0) {
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
    auto r = lgnn::grad_check(
        [&](Tape<double>& t) {
            auto w = Tensor<double>(e, 1);
            for (std::size_t k = 0; k < e; ++k) w(k, 0) = std::sin(static_cast<double>(k) + 1.0);
            return ops::sum(t, ops::mul(t, ops::segment_softmax(t, s, tgt, n), w));
        },
        {{"s", s}});
    EXPECT_LE(r.max_rel_err(), 1e-7);
}

TEST(SegmentSoftmax, StableForLargeScores) {
    auto s = Tensor<double>::from_rows({{1000.0}, {999.0}, {-1000.0}});
    Tape<double> tape;
    auto a = ops::segment_softmax(tape, s, {0, 0, 1}, 2);
    EXPECT_NEAR(a(0, 0) + a(1, 0), 1.0, 1e-12);
    EXPECT_NEAR(a(2, 0), 1.0, 1e-12);
}

TEST(LocalizedMessages, WorkedExample) {
    auto W = Tensor<double>::from_rows({{1, 2}, {3, 4}});
    auto a = Tensor<double>::from_rows({{2, 3}});
    auto b = Tensor<double>::from_rows({{0.5, 0.5}});
    auto h = Tensor<double>::from_rows({{1, 1}});
    Tape<double> tape;
    auto m = ops::localized_messages(tape, W, h, a, b, {0}, {0});
    EXPECT_DOUBLE_EQ(m(0, 0), 9.0);
    EXPECT_DOUBLE_EQ(m(0, 1), 19.0);
}

TEST(LocalizedMessages, IdentityGatesGiveSharedWeight) {
    std::mt19937_64 rng(24);
    auto W = random_tensor(3, 4, rng), h = random_tensor(5, 4, rng);
    auto one = Tensor<double>::filled(5, 4, 1.0), zero = Tensor<double>::zeros(5, 4);
    ops::Index src{0, 1, 2, 3, 4, 2}, tgt{1, 1, 0, 4, 3, 2};
    Tape<double> tape;
    auto m = ops::localized_messages(tape, W, h, one, zero, src, tgt);
    auto z = ops::gather_rows(tape, ops::matmul_t(tape, h, W), src);
    EXPECT_LE(testutil::max_abs_diff(m, z), 1e-14);
}

TEST(LocalizedMessages, MatchesExplicitMaterializationOnRandomInstances) {
    std::mt19937_64 rng(25);
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t dout = dim(rng), din = dim(rng), n = 6, e = 11;
        auto W = random_tensor(dout, din, rng), h = random_tensor(n, din, rng);
        auto a = random_tensor(n, din, rng, false, 0.0, 2.0), b = random_tensor(n, din, rng);
        if (trial % 2) h(0, 0) = 0.0;
        auto src = random_index(e, n, rng), tgt = random_index(e, n, rng);
        Tape<double> tape;
        auto m = ops::localized_messages(tape, W, h, a, b, src, tgt);
        for (std::size_t k = 0; k < e; ++k) {
            auto ref = materialized_message(W, a.row(tgt[k]), b.row(tgt[k]), h.row(src[k]));
            for (std::size_t i = 0; i < dout; ++i) EXPECT_NEAR(m(k, i), ref[i], 1e-12);
        }
    }
}

TEST(LocalizedMessages, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(26);
    const std::size_t n = 5, e = 12;
    auto W = random_tensor(3, 4, rng, true), a = random_tensor(n, 4, rng, true), b = random_tensor(n, 4, rng, true);
    auto h = random_tensor(n, 4, rng, true);
    h(1, 2) = 0.0;
    auto src = random_index(e, n, rng), tgt = random_index(e, n, rng);
    auto w = random_tensor(e, 3, rng);
    auto loss = [&](Tape<double>& t) {
        return ops::sum(t, ops::mul(t, ops::localized_messages(t, W, h, a, b, src, tgt), w));
    };
    auto r = lgnn::grad_check(loss, {{"W", W}, {"h", h}, {"a", a}, {"b", b}});
    for (const auto& entry : r.entries) EXPECT_LE(entry.rel_err, 1e-7) << entry.name;

    // constant input: the zero-skipping path
    auto hc = h.clone();
    hc.set_requires_grad(false);
    auto r2 = lgnn::grad_check(
        [&](Tape<double>& t) {
            return ops::sum(t, ops::mul(t, ops::localized_messages(t, W, hc, a, b, src, tgt), w));
        },
        {{"W", W}, {"a", a}, {"b", b}});
    for (const auto& entry : r2.entries) EXPECT_LE(entry.rel_err, 1e-7) << entry.name;
}
