#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "lgnn/lgnn.hpp"

namespace testutil {

template <class T = double>
lgnn::Tensor<T> random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, bool requires_grad = false,
                              double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<T> v(r * c);
    for (auto& x : v) x = static_cast<T>(u(rng));
    return lgnn::Tensor<T>(r, c, std::move(v), requires_grad);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <class T>
double max_abs_diff(const lgnn::Tensor<T>& a, const lgnn::Tensor<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return m;
}

// Small random graph with Gaussian features and uniform labels.
inline lgnn::GraphBundle random_graph(std::size_t n, double p, std::size_t dim, std::size_t classes,
                                      std::uint64_t seed) {
    lgnn::SyntheticSpec s;
    s.n = n;
    s.p = p;
    s.feature_dim = dim;
    s.num_classes = classes;
    s.seed = seed;
    return lgnn::synthetic_graph(s);
}

}  // namespace testutil
