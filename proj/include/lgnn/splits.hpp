#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lgnn/graph.hpp"

namespace lgnn {

enum class SplitMode { automatic, fixed_file, seeded_random };

struct SplitSpec {
    std::size_t per_class_train = 20;
    std::size_t val_size = 500;
    std::size_t test_size = 1000;
    std::uint64_t seed = 0;
    SplitMode mode = SplitMode::automatic;
};

/// Returns a copy of `bundle` with train/val/test masks installed.
///
/// fixed_file uses the bundle's splits.json verbatim. seeded_random draws
/// per_class_train nodes of each class uniformly without replacement, then
/// val_size and test_size nodes from the shuffled remainder. automatic picks
/// fixed_file when the bundle carries splits.
inline GraphBundle make_splits(GraphBundle bundle, const SplitSpec& spec) {
    SplitMode mode = spec.mode;
    if (mode == SplitMode::automatic)
        mode = bundle.fixed_splits ? SplitMode::fixed_file : SplitMode::seeded_random;

    if (mode == SplitMode::fixed_file) {
        if (!bundle.fixed_splits) throw DataError("splits: bundle '" + bundle.name + "' has no splits.json");
        bundle.masks = *bundle.fixed_splits;
        return bundle;
    }

    const std::size_t n = bundle.num_nodes, k = bundle.num_classes;
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t v = 0; v < n; ++v) by_class[static_cast<std::size_t>(bundle.labels[v])].push_back(v);
    for (std::size_t c = 0; c < k; ++c) {
        if (by_class[c].size() < spec.per_class_train)
            throw DataError("splits: class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                            " nodes, need " + std::to_string(spec.per_class_train));
    }
    if (spec.per_class_train * k + spec.val_size + spec.test_size > n)
        throw DataError("splits: " + std::to_string(spec.per_class_train * k) + " train + " +
                        std::to_string(spec.val_size) + " val + " + std::to_string(spec.test_size) +
                        " test exceeds " + std::to_string(n) + " nodes");

    std::mt19937_64 rng(spec.seed);
    Masks m;
    std::vector<char> used(n, 0);
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i = 0; i < spec.per_class_train; ++i) {
            m.train.push_back(members[i]);
            used[members[i]] = 1;
        }
    }
    std::sort(m.train.begin(), m.train.end());
    std::vector<std::size_t> rest;
    for (std::size_t v = 0; v < n; ++v)
        if (!used[v]) rest.push_back(v);
    std::shuffle(rest.begin(), rest.end(), rng);
    m.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(spec.val_size));
    m.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(spec.val_size),
                  rest.begin() + static_cast<std::ptrdiff_t>(spec.val_size + spec.test_size));
    std::sort(m.val.begin(), m.val.end());
    std::sort(m.test.begin(), m.test.end());
    validate_masks(m, n, bundle.labels, k);
    bundle.masks = std::move(m);
    return bundle;
}

}  // namespace lgnn
