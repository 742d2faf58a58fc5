#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lgnn/tensor.hpp"

using lgnn::Tape;
using lgnn::Tensor;

TEST(Tensor, ConstructionAndAccess) {
    auto t = Tensor<double>::from_rows({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_DOUBLE_EQ(t(1, 2), 6.0);
    EXPECT_DOUBLE_EQ(t.row(1)[0], 4.0);
    EXPECT_FALSE(t.is_scalar());
    EXPECT_FALSE(t.requires_grad());
}

TEST(Tensor, RejectsWrongValueCount) {
    EXPECT_THROW(Tensor<double>(2, 2, std::vector<double>{1, 2, 3}), lgnn::ShapeError);
    EXPECT_THROW((Tensor<double>::from_rows({{1, 2}, {3}})), lgnn::ShapeError);
}

TEST(Tensor, ItemRequiresScalar) {
    EXPECT_DOUBLE_EQ(Tensor<double>::filled(1, 1, 2.5).item(), 2.5);
    EXPECT_THROW(Tensor<double>::zeros(2, 1).item(), lgnn::ShapeError);
}

TEST(Tensor, HandlesShareStorageAndCloneDoesNot) {
    auto a = Tensor<float>::zeros(2, 2);
    auto b = a;
    b(0, 0) = 3.0f;
    EXPECT_FLOAT_EQ(a(0, 0), 3.0f);
    EXPECT_TRUE(a.same_storage(b));
    auto c = a.clone();
    c(0, 0) = 7.0f;
    EXPECT_FLOAT_EQ(a(0, 0), 3.0f);
    EXPECT_FALSE(a.same_storage(c));
}

TEST(Tensor, GradAllocatedLazilyAsZeros) {
    auto t = Tensor<double>::zeros(2, 3, true);
    EXPECT_FALSE(t.has_grad());
    auto g = t.grad();
    EXPECT_EQ(g.size(), 6u);
    for (double x : g) EXPECT_EQ(x, 0.0);
    g[4] = 1.0;
    EXPECT_TRUE(t.has_grad());
    t.zero_grad();
    EXPECT_EQ(t.grad()[4], 0.0);
    t.clear_grad();
    EXPECT_FALSE(t.has_grad());
}

TEST(Tape, BackwardRejectsNonScalarLoss) {
    Tape<double> tape;
    auto t = Tensor<double>::zeros(2, 1, true);
    EXPECT_THROW(tape.backward(t), lgnn::TapeError);
}

TEST(Tape, SecondBackwardIsAnError) {
    Tape<double> tape;
    auto t = Tensor<double>::filled(1, 1, 1.0, true);
    tape.backward(t);
    EXPECT_DOUBLE_EQ(t.grad()[0], 1.0);
    EXPECT_THROW(tape.backward(t), lgnn::TapeError);
    EXPECT_THROW(tape.record("x", {}, nullptr, [] {}), lgnn::TapeError);
}

TEST(Tape, InferenceTapeRecordsNothing) {
    auto tape = Tape<double>::inference();
    auto t = Tensor<double>::zeros(1, 1, true);
    EXPECT_FALSE(tape.recording());
    EXPECT_FALSE(tape.wants(t));
    Tape<double> rec;
    EXPECT_TRUE(rec.wants(t));
    EXPECT_FALSE(rec.wants(Tensor<double>::zeros(1, 1)));
}

TEST(Tensor, CheckFiniteRaisesNumericError) {
    auto t = Tensor<double>::zeros(1, 2);
    EXPECT_NO_THROW(lgnn::detail::check_finite(t, "op"));
    t(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(lgnn::detail::check_finite(t, "op"), lgnn::NumericError);
    t(0, 1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(lgnn::detail::check_finite(t, "op"), lgnn::NumericError);
}
