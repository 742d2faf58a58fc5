#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lgnn/graph.hpp"

namespace lgnn {

enum class SyntheticKind { er, sbm };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::er;
    std::size_t n = 30;
    double p = 0.2;       // er
    double p_in = 0.5;    // sbm
    double p_out = 0.05;  // sbm
    std::size_t feature_dim = 16;
    std::size_t num_classes = 2;
    /// Mean shift added to the features matching a node's class.
    double feature_signal = 1.0;
    std::uint64_t seed = 0;
};

/// Erdos-Renyi or two-block stochastic block graph with Gaussian features.
///
/// er labels are drawn uniformly from num_classes; sbm has exactly two
/// blocks (first half / second half) and the block is the label.
inline GraphBundle synthetic_graph(const SyntheticSpec& spec) {
    if (spec.n < 2) throw Error("synthetic_graph: n must be >= 2");
    auto valid = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (spec.kind == SyntheticKind::er && !valid(spec.p)) throw Error("synthetic_graph: invalid probability p");
    if (spec.kind == SyntheticKind::sbm && (!valid(spec.p_in) || !valid(spec.p_out)))
        throw Error("synthetic_graph: invalid block probability");
    if (spec.num_classes == 0) throw Error("synthetic_graph: need at least one class");

    std::mt19937_64 rng(spec.seed);
    const std::size_t n = spec.n;
    const std::size_t k = spec.kind == SyntheticKind::sbm ? 2 : spec.num_classes;
    std::vector<int> labels(n);
    if (spec.kind == SyntheticKind::sbm) {
        for (std::size_t v = 0; v < n; ++v) labels[v] = v < n / 2 ? 0 : 1;
    } else {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(k) - 1);
        for (auto& y : labels) y = pick(rng);
    }

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<Edge> und;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v) {
            double p = spec.p;
            if (spec.kind == SyntheticKind::sbm) p = labels[u] == labels[v] ? spec.p_in : spec.p_out;
            if (coin(rng) < p) und.emplace_back(u, v);
        }

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> feats(n * spec.feature_dim);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t j = 0; j < spec.feature_dim; ++j) {
            double x = noise(rng);
            if (j % k == static_cast<std::size_t>(labels[v])) x += spec.feature_signal;
            feats[v * spec.feature_dim + j] = x;
        }

    const std::string name = spec.kind == SyntheticKind::er ? "er" : "sbm";
    return build_bundle(name, n, k, spec.feature_dim, und, std::move(feats), std::move(labels));
}

}  // namespace lgnn
