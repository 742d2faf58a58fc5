#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgnn/graph.hpp"

namespace lgnn {

struct IngestReport {
    std::size_t num_nodes = 0;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    /// Non-empty lines in the cites file.
    std::size_t citation_records = 0;
    /// Distinct unordered pairs kept after dropping unknown ids and self-citations.
    std::size_t undirected_edges = 0;
    std::size_t dropped_unknown = 0;
    std::size_t dropped_self = 0;
    std::size_t duplicate_records = 0;
    std::vector<std::string> class_names;
};

/// Converts the classic citation-network raw format into a bundle.
///
/// content: "id<TAB>f1 ... fd<TAB>label" per line.
/// cites:   "cited<TAB>citing" per line.
/// Ids are numbered in first-appearance order; labels are numbered in
/// lexicographic order of their names.
inline IngestReport ingest_content_cites(const std::filesystem::path& content_path,
                                         const std::filesystem::path& cites_path,
                                         const std::filesystem::path& out_dir) {
    const std::string ctext = io::read_text(content_path);
    const std::string cname = content_path.filename().string();
    std::unordered_map<std::string, std::size_t> ids;
    std::vector<std::string> label_names;
    std::vector<double> feats;
    std::size_t dim = 0;
    bool have_dim = false;
    std::size_t lineno = 0;
    for (auto line : io::lines_of(ctext)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = cname + ":" + std::to_string(lineno);
        auto f = io::split_ws(line);
        if (f.size() < 2) throw DataError(where + ": expected id, features and label");
        const std::size_t d = f.size() - 2;
        if (!have_dim) {
            dim = d;
            have_dim = true;
        } else if (d != dim) {
            throw DataError(where + ": " + std::to_string(d) + " features, expected " + std::to_string(dim));
        }
        const std::string id(f.front());
        if (!ids.emplace(id, ids.size()).second) throw DataError(where + ": duplicate node id '" + id + "'");
        for (std::size_t j = 1; j + 1 < f.size(); ++j) feats.push_back(io::parse_number<double>(f[j], where));
        label_names.emplace_back(f.back());
    }
    if (ids.empty()) throw DataError(cname + ": no nodes");

    std::map<std::string, int> label_index;
    for (const auto& s : label_names) label_index.emplace(s, 0);
    int next = 0;
    for (auto& [name, idx] : label_index) idx = next++;
    std::vector<int> labels;
    labels.reserve(label_names.size());
    for (const auto& s : label_names) labels.push_back(label_index.at(s));

    IngestReport report;
    report.num_nodes = ids.size();
    report.num_classes = label_index.size();
    report.feature_dim = dim;
    for (const auto& [name, idx] : label_index) report.class_names.push_back(name);

    const std::string etext = io::read_text(cites_path);
    const std::string ename = cites_path.filename().string();
    std::set<Edge> pairs;
    lineno = 0;
    for (auto line : io::lines_of(etext)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = io::split_ws(line);
        if (f.size() != 2) throw DataError(ename + ":" + std::to_string(lineno) + ": expected 2 fields");
        ++report.citation_records;
        auto a = ids.find(std::string(f[0]));
        auto b = ids.find(std::string(f[1]));
        if (a == ids.end() || b == ids.end()) {
            ++report.dropped_unknown;
            continue;
        }
        if (a->second == b->second) {
            ++report.dropped_self;
            continue;
        }
        const Edge key{std::min(a->second, b->second), std::max(a->second, b->second)};
        if (!pairs.insert(key).second) ++report.duplicate_records;
    }
    if (report.citation_records == 0) throw DataError(ename + ": no citations");
    report.undirected_edges = pairs.size();

    std::vector<Edge> und(pairs.begin(), pairs.end());
    auto g = build_bundle(content_path.stem().string(), report.num_nodes, report.num_classes, dim, und,
                          std::move(feats), std::move(labels));
    save_bundle(g, out_dir,
                {{"class_names", report.class_names},
                 {"citation_records", report.citation_records},
                 {"dropped_unknown", report.dropped_unknown}});
    return report;
}

}  // namespace lgnn
