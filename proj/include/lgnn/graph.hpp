#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgnn/segment.hpp"
#include "lgnn/tensor.hpp"

namespace lgnn {

/// Malformed or inconsistent on-disk data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Compressed rows: row v lists the local context C_v, v itself first and
/// then its neighbors in ascending order.
struct ContextIndex {
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> members;

    std::size_t rows() const { return offsets.size() - 1; }
    std::span<const std::size_t> of(std::size_t v) const {
        return {members.data() + offsets[v], offsets[v + 1] - offsets[v]};
    }
    std::size_t size_of(std::size_t v) const { return offsets[v + 1] - offsets[v]; }
    std::size_t total() const { return members.size(); }
};

struct Masks {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;

    bool operator==(const Masks&) const = default;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Loaded graph. Immutable once built; make_splits returns a copy with
/// masks installed.
struct GraphBundle {
    std::string name;
    std::size_t num_nodes = 0;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    /// Directed pairs after symmetrization, sorted, no duplicates.
    std::vector<Edge> edges;
    ContextIndex context;
    /// Features as stored on disk, row-major N x feature_dim.
    std::vector<double> features;
    std::vector<int> labels;
    Masks masks;
    /// Splits read from splits.json, when the bundle has one.
    std::optional<Masks> fixed_splits;
    /// Row-normalize features when they are turned into a model input.
    bool normalize_features = false;
    /// Context edges (u -> v for every u in C_v), grouped by target v.
    ops::Index ctx_src;
    ops::Index ctx_tgt;

    std::size_t num_undirected_edges() const { return edges.size() / 2; }
    std::size_t num_context_edges() const { return ctx_src.size(); }

    template <class T>
    Tensor<T> feature_tensor() const {
        Tensor<T> x(num_nodes, feature_dim);
        for (std::size_t v = 0; v < num_nodes; ++v) {
            const double* row = features.data() + v * feature_dim;
            double s = 0.0;
            if (normalize_features)
                for (std::size_t j = 0; j < feature_dim; ++j) s += row[j];
            const double scale = normalize_features && s != 0.0 ? 1.0 / s : 1.0;
            for (std::size_t j = 0; j < feature_dim; ++j) x(v, j) = static_cast<T>(row[j] * scale);
        }
        return x;
    }

    bool operator==(const GraphBundle& o) const {
        return name == o.name && num_nodes == o.num_nodes && num_classes == o.num_classes &&
               feature_dim == o.feature_dim && edges == o.edges && features == o.features &&
               labels == o.labels && masks == o.masks && fixed_splits == o.fixed_splits;
    }
};

inline void validate_masks(const Masks& m, std::size_t num_nodes, const std::vector<int>& labels,
                           std::size_t num_classes) {
    std::vector<char> seen(num_nodes, 0);
    auto mark = [&](const std::vector<std::size_t>& set, const char* which) {
        for (std::size_t v : set) {
            if (v >= num_nodes)
                throw DataError(std::string("splits: ") + which + " node " + std::to_string(v) +
                                " out of range");
            if (seen[v]) throw DataError(std::string("splits: node ") + std::to_string(v) + " in more than one mask");
            if (labels[v] < 0 || static_cast<std::size_t>(labels[v]) >= num_classes)
                throw DataError(std::string("splits: node ") + std::to_string(v) + " has no valid label");
            seen[v] = 1;
        }
    };
    mark(m.train, "train");
    mark(m.val, "val");
    mark(m.test, "test");
}

/// Builds a validated bundle from an undirected edge list.
///
/// Self-loops are dropped; each unordered pair must appear at most once
/// unless `collapse_duplicates` is set.
inline GraphBundle build_bundle(std::string name, std::size_t num_nodes, std::size_t num_classes,
                                std::size_t feature_dim, const std::vector<Edge>& undirected,
                                std::vector<double> features, std::vector<int> labels,
                                bool collapse_duplicates = false) {
    if (features.size() != num_nodes * feature_dim)
        throw DataError("bundle: feature matrix has " + std::to_string(features.size()) +
                        " values, expected " + std::to_string(num_nodes * feature_dim));
    if (labels.size() != num_nodes)
        throw DataError("bundle: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(num_nodes) + " nodes");
    for (std::size_t v = 0; v < num_nodes; ++v) {
        if (labels[v] < 0 || static_cast<std::size_t>(labels[v]) >= num_classes)
            throw DataError("bundle: label " + std::to_string(labels[v]) + " of node " +
                            std::to_string(v) + " out of range [0, " + std::to_string(num_classes) + ")");
    }
    GraphBundle g;
    g.name = std::move(name);
    g.num_nodes = num_nodes;
    g.num_classes = num_classes;
    g.feature_dim = feature_dim;
    g.features = std::move(features);
    g.labels = std::move(labels);

    std::set<Edge> pairs;
    for (auto [u, v] : undirected) {
        if (u >= num_nodes || v >= num_nodes)
            throw DataError("bundle: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") has a dangling endpoint");
        if (u == v) continue;
        const Edge key{std::min(u, v), std::max(u, v)};
        if (!pairs.insert(key).second && !collapse_duplicates)
            throw DataError("bundle: duplicate edge (" + std::to_string(key.first) + ", " +
                            std::to_string(key.second) + ") after symmetrization");
    }
    g.edges.reserve(pairs.size() * 2);
    for (auto [u, v] : pairs) {
        g.edges.emplace_back(u, v);
        g.edges.emplace_back(v, u);
    }
    std::sort(g.edges.begin(), g.edges.end());

    std::vector<std::vector<std::size_t>> nbrs(num_nodes);
    for (auto [u, v] : g.edges) nbrs[u].push_back(v);
    g.context.offsets.assign(1, 0);
    g.context.members.clear();
    for (std::size_t v = 0; v < num_nodes; ++v) {
        g.context.members.push_back(v);
        g.context.members.insert(g.context.members.end(), nbrs[v].begin(), nbrs[v].end());
        g.context.offsets.push_back(g.context.members.size());
        for (std::size_t u : g.context.of(v)) {
            g.ctx_src.push_back(u);
            g.ctx_tgt.push_back(v);
        }
    }
    return g;
}

/// Same bundle with its nodes relabeled: new id of node v is perm[v].
inline GraphBundle permute_nodes(const GraphBundle& g, const std::vector<std::size_t>& perm) {
    const std::size_t n = g.num_nodes, d = g.feature_dim;
    std::vector<double> feats(n * d);
    std::vector<int> labels(n);
    for (std::size_t v = 0; v < n; ++v) {
        std::copy_n(g.features.begin() + static_cast<std::ptrdiff_t>(v * d), d,
                    feats.begin() + static_cast<std::ptrdiff_t>(perm[v] * d));
        labels[perm[v]] = g.labels[v];
    }
    std::vector<Edge> und;
    for (auto [u, v] : g.edges)
        if (u < v) und.emplace_back(perm[u], perm[v]);
    auto out = build_bundle(g.name, n, g.num_classes, d, und, std::move(feats), std::move(labels));
    auto map = [&](const std::vector<std::size_t>& s) {
        std::vector<std::size_t> r;
        for (std::size_t v : s) r.push_back(perm[v]);
        return r;
    };
    out.masks = {map(g.masks.train), map(g.masks.val), map(g.masks.test)};
    out.normalize_features = g.normalize_features;
    return out;
}

namespace io {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Splits text into lines, dropping a trailing empty line and any '\r'.
inline std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        pos = nl + 1;
    }
    return out;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == '\t' || line[i] == ' ')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != '\t' && line[j] != ' ') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <class Num>
Num parse_number(std::string_view s, const std::string& where) {
    Num v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw DataError(where + ": cannot parse '" + std::string(s) + "'");
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
    if (!out) throw DataError("write failed: " + p.string());
}

inline Masks masks_from_json(const nlohmann::json& j) {
    Masks m;
    try {
        m.train = j.at("train").get<std::vector<std::size_t>>();
        m.val = j.at("val").get<std::vector<std::size_t>>();
        m.test = j.at("test").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("splits.json: ") + e.what());
    }
    return m;
}

inline nlohmann::json masks_to_json(const Masks& m) {
    return {{"train", m.train}, {"val", m.val}, {"test", m.test}};
}

}  // namespace io

struct LoadOptions {
    bool normalize_features = true;
};

/// Reads a bundle directory (meta.json, edges.tsv, features.tsv,
/// labels.tsv, optional splits.json).
inline GraphBundle load_bundle(const std::filesystem::path& dir, const LoadOptions& opts = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("bundle directory not found: " + dir.string());
    for (const char* f : {"meta.json", "edges.tsv", "features.tsv", "labels.tsv"})
        if (!fs::exists(dir / f)) throw DataError("bundle: missing file " + (dir / f).string());

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(io::read_text(dir / "meta.json"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("meta.json: ") + e.what());
    }
    std::string name;
    std::size_t n = 0, k = 0, d = 0;
    try {
        name = meta.at("name").get<std::string>();
        n = meta.at("num_nodes").get<std::size_t>();
        k = meta.at("num_classes").get<std::size_t>();
        d = meta.at("feature_dim").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("meta.json: ") + e.what());
    }

    const std::string etext = io::read_text(dir / "edges.tsv");
    std::vector<Edge> und;
    std::size_t lineno = 0;
    for (auto line : io::lines_of(etext)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = io::split_ws(line);
        const std::string where = "edges.tsv:" + std::to_string(lineno);
        if (f.size() != 2) throw DataError(where + ": expected 2 fields");
        und.emplace_back(io::parse_number<std::size_t>(f[0], where), io::parse_number<std::size_t>(f[1], where));
    }

    const std::string ftext = io::read_text(dir / "features.tsv");
    auto flines = io::lines_of(ftext);
    if (flines.size() != n)
        throw DataError("features.tsv: " + std::to_string(flines.size()) + " rows, expected " + std::to_string(n));
    std::vector<double> feats;
    feats.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string where = "features.tsv:" + std::to_string(i + 1);
        auto f = io::split_ws(flines[i]);
        if (f.size() != d)
            throw DataError(where + ": " + std::to_string(f.size()) + " values, expected " + std::to_string(d));
        for (auto s : f) feats.push_back(io::parse_number<double>(s, where));
    }

    const std::string ltext = io::read_text(dir / "labels.tsv");
    auto llines = io::lines_of(ltext);
    if (llines.size() != n)
        throw DataError("labels.tsv: " + std::to_string(llines.size()) + " rows, expected " + std::to_string(n));
    std::vector<int> labels;
    labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        labels.push_back(io::parse_number<int>(llines[i], "labels.tsv:" + std::to_string(i + 1)));

    auto g = build_bundle(name, n, k, d, und, std::move(feats), std::move(labels));
    g.normalize_features = opts.normalize_features;
    if (fs::exists(dir / "splits.json")) {
        nlohmann::json sj;
        try {
            sj = nlohmann::json::parse(io::read_text(dir / "splits.json"));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("splits.json: ") + e.what());
        }
        auto m = io::masks_from_json(sj);
        validate_masks(m, n, g.labels, k);
        g.fixed_splits = std::move(m);
    }
    return g;
}

/// Writes the bundle layout read by load_bundle. Features are written in
/// shortest round-trip form, so save -> load is lossless.
inline void save_bundle(const GraphBundle& g, const std::filesystem::path& dir,
                        const nlohmann::json& extra_meta = nlohmann::json::object()) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"name", g.name},
                           {"num_nodes", g.num_nodes},
                           {"num_classes", g.num_classes},
                           {"feature_dim", g.feature_dim}};
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    io::write_text(dir / "meta.json", meta.dump(2) + "\n");

    std::string e;
    for (auto [u, v] : g.edges)
        if (u < v) e += std::to_string(u) + "\t" + std::to_string(v) + "\n";
    io::write_text(dir / "edges.tsv", e);

    std::string f;
    f.reserve(g.features.size() * 2);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        for (std::size_t j = 0; j < g.feature_dim; ++j) {
            if (j) f += '\t';
            f += io::format_double(g.features[v * g.feature_dim + j]);
        }
        f += '\n';
    }
    io::write_text(dir / "features.tsv", f);

    std::string l;
    for (int y : g.labels) l += std::to_string(y) + "\n";
    io::write_text(dir / "labels.tsv", l);

    if (g.fixed_splits) io::write_text(dir / "splits.json", io::masks_to_json(*g.fixed_splits).dump() + "\n");
}

}  // namespace lgnn
