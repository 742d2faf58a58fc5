#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgnn/gradcheck.hpp"
#include "lgnn/graph.hpp"
#include "lgnn/ingest.hpp"
#include "lgnn/model.hpp"
#include "lgnn/splits.hpp"
#include "lgnn/synthetic.hpp"
#include "lgnn/train.hpp"

namespace lgnn {

class ConfigError : public Error {
public:
    using Error::Error;
};

inline constexpr int kResultSchemaVersion = 1;

struct SplitConfig {
    std::string mode = "auto";  // auto, fixed, random
    std::uint64_t seed = 0;
    std::size_t per_class_train = 20;
    std::size_t val_size = 500;
    std::size_t test_size = 1000;
    /// Draw fresh random splits for every training seed.
    bool resample_per_seed = false;

    SplitSpec to_spec() const {
        SplitSpec s;
        s.per_class_train = per_class_train;
        s.val_size = val_size;
        s.test_size = test_size;
        s.seed = seed;
        if (mode == "auto") s.mode = SplitMode::automatic;
        else if (mode == "fixed") s.mode = SplitMode::fixed_file;
        else if (mode == "random") s.mode = SplitMode::seeded_random;
        else throw ConfigError("split.mode: expected auto, fixed or random, got '" + mode + "'");
        return s;
    }
};

/// Everything that determines a run. Serialized as one JSON document.
struct ExperimentConfig {
    /// Bundle directory, a name under $LGNN_DATA_DIR, or
    /// "synthetic:er:n=30,p=0.2" / "synthetic:sbm:n=60,p_in=0.3,p_out=0.02".
    std::string dataset;
    std::string out;
    bool normalize_features = true;
    ModelOptions model;
    TrainConfig train;
    SplitConfig split;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace config_detail {

using nlohmann::json;

inline std::string precision_name(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }
inline Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw ConfigError("precision: expected f32 or f64, got '" + s + "'");
}
inline std::string monitor_name(Monitor m) { return m == Monitor::loss ? "loss" : "accuracy"; }
inline Monitor parse_monitor(const std::string& s) {
    if (s == "accuracy") return Monitor::accuracy_then_loss;
    if (s == "loss") return Monitor::loss;
    throw ConfigError("monitor: expected accuracy or loss, got '" + s + "'");
}
inline std::string reduction_name(CeReduction r) { return r == CeReduction::mean ? "mean" : "sum"; }
inline CeReduction parse_reduction(const std::string& s) {
    if (s == "sum") return CeReduction::sum;
    if (s == "mean") return CeReduction::mean;
    throw ConfigError("ce_reduction: expected sum or mean, got '" + s + "'");
}

/// Reads keys of one JSON object, rejecting any key not consumed.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
    }

    template <class V>
    void get(const char* key, V& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            if constexpr (std::is_same_v<V, std::size_t> || std::is_same_v<V, std::uint64_t>) {
                if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
            }
            out = it->template get<V>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + "wrong type");
        } catch (const ConfigError& e) {
            throw ConfigError(where(key) + e.what());
        }
    }

    /// Optional value; JSON null keeps the automatic default.
    template <class V>
    void get_opt(const char* key, std::optional<V>& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        V v{};
        get(key, v);
        out = v;
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + child(it.key().c_str()) + "'");
    }

private:
    std::string where(const std::string& key) const {
        return "config: " + (key.empty() ? (path_.empty() ? std::string("<root>") : path_) : child(key.c_str())) +
               ": ";
    }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace config_detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
    using namespace config_detail;
    const auto& m = c.model;
    json jm = {{"name", m.model},
               {"localization", m.localization ? json(to_string(*m.localization)) : json(nullptr)},
               {"hidden", m.hidden},
               {"heads", m.heads},
               {"num_layers", m.num_layers},
               {"lambda_g", m.lambda_g},
               {"lambda_l", m.lambda_l ? json(*m.lambda_l) : json(nullptr)},
               {"lambda", m.lambda ? json(*m.lambda) : json(nullptr)},
               {"dropout", m.dropout},
               {"hidden_activation", to_string(m.hidden_activation)},
               {"gate_activation", to_string(m.gate_activation)},
               {"gcn_norm", m.gcn_norm ? json(to_string(*m.gcn_norm)) : json(nullptr)},
               {"gate_bottleneck", m.gate_bottleneck},
               {"bottleneck_threshold", m.bottleneck_threshold},
               {"ce_reduction", reduction_name(m.ce_reduction)}};
    const auto& t = c.train;
    json jt = {{"lr", t.adam.lr},
               {"beta1", t.adam.beta1},
               {"beta2", t.adam.beta2},
               {"eps", t.adam.eps},
               {"max_epochs", t.max_epochs},
               {"patience", t.patience},
               {"monitor", monitor_name(t.monitor)},
               {"seeds", t.seeds},
               {"precision", precision_name(t.precision)},
               {"threads", t.threads}};
    const auto& s = c.split;
    json js = {{"mode", s.mode},
               {"seed", s.seed},
               {"per_class_train", s.per_class_train},
               {"val_size", s.val_size},
               {"test_size", s.test_size},
               {"resample_per_seed", s.resample_per_seed}};
    return {{"dataset", c.dataset},
            {"out", c.out},
            {"normalize_features", c.normalize_features},
            {"model", jm},
            {"train", jt},
            {"split", js}};
}

/// Fills `c` from `j`; absent keys keep their current values.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
    using namespace config_detail;
    Reader r(j, "");
    r.get("dataset", c.dataset);
    r.get("out", c.out);
    r.get("normalize_features", c.normalize_features);
    if (const json* jm = r.sub("model")) {
        Reader m(*jm, "model");
        auto& o = c.model;
        m.get("name", o.model);
        std::optional<std::string> loc, norm;
        m.get_opt("localization", loc);
        if (loc) o.localization = parse_localization(*loc);
        m.get("hidden", o.hidden);
        m.get("heads", o.heads);
        m.get("num_layers", o.num_layers);
        m.get("lambda_g", o.lambda_g);
        m.get_opt("lambda_l", o.lambda_l);
        m.get_opt("lambda", o.lambda);
        m.get("dropout", o.dropout);
        std::string ha = to_string(o.hidden_activation), ga = to_string(o.gate_activation);
        m.get("hidden_activation", ha);
        m.get("gate_activation", ga);
        o.hidden_activation = parse_activation(ha);
        o.gate_activation = parse_activation(ga);
        m.get_opt("gcn_norm", norm);
        if (norm) o.gcn_norm = parse_gcn_norm(*norm);
        m.get("gate_bottleneck", o.gate_bottleneck);
        m.get("bottleneck_threshold", o.bottleneck_threshold);
        std::string red = reduction_name(o.ce_reduction);
        m.get("ce_reduction", red);
        o.ce_reduction = parse_reduction(red);
        m.finish();
    }
    if (const json* jt = r.sub("train")) {
        Reader t(*jt, "train");
        auto& tc = c.train;
        t.get("lr", tc.adam.lr);
        t.get("beta1", tc.adam.beta1);
        t.get("beta2", tc.adam.beta2);
        t.get("eps", tc.adam.eps);
        t.get("max_epochs", tc.max_epochs);
        t.get("patience", tc.patience);
        std::string mon = monitor_name(tc.monitor), prec = precision_name(tc.precision);
        t.get("monitor", mon);
        tc.monitor = parse_monitor(mon);
        t.get("seeds", tc.seeds);
        t.get("precision", prec);
        tc.precision = parse_precision(prec);
        t.get("threads", tc.threads);
        t.finish();
    }
    if (const json* js = r.sub("split")) {
        Reader s(*js, "split");
        s.get("mode", c.split.mode);
        s.get("seed", c.split.seed);
        s.get("per_class_train", c.split.per_class_train);
        s.get("val_size", c.split.val_size);
        s.get("test_size", c.split.test_size);
        s.get("resample_per_seed", c.split.resample_per_seed);
        s.finish();
    }
    r.finish();
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    apply_json(c, j);
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_text(p));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// Replaces automatic model choices with the values they resolve to, so
/// the echoed config states every number that was used.
inline ExperimentConfig resolve_config(ExperimentConfig c) {
    auto& o = c.model;
    const ModelName mn = parse_model_name(o.model);
    if (!o.localization) o.localization = mn.localization;
    const bool film = *o.localization == Localization::film;
    if (!o.lambda_l) o.lambda_l = film ? o.lambda_g : 1.0;
    if (!o.lambda) o.lambda = film ? 0.0 : (mn.arch == ArchKind::gat ? 0.1 : 1.0);
    if (!o.gcn_norm) o.gcn_norm = o.model == "gcn" ? GcnNorm::sym : GcnNorm::context_mean;
    c.split.to_spec();
    c.train.validate();
    return c;
}

/// 64-bit FNV-1a over the canonical JSON of the config without `out`.
inline std::string config_fingerprint(const ExperimentConfig& c) {
    auto j = to_json(c);
    j.erase("out");
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Datasets

inline std::map<std::string, std::string> parse_kv_list(const std::string& s, const std::string& what) {
    std::map<std::string, std::string> kv;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string item = s.substr(pos, comma - pos);
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError(what + ": expected key=value, got '" + item + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
        pos = comma + 1;
    }
    return kv;
}

inline SyntheticSpec parse_synthetic(const std::string& s) {
    // synthetic:<kind>[:k=v,...]
    const std::string rest = s.substr(std::string("synthetic:").size());
    const auto colon = rest.find(':');
    const std::string kind = rest.substr(0, colon);
    SyntheticSpec spec;
    if (kind == "er") spec.kind = SyntheticKind::er;
    else if (kind == "sbm") spec.kind = SyntheticKind::sbm;
    else throw ConfigError("dataset: unknown synthetic kind '" + kind + "'");
    if (colon == std::string::npos) return spec;
    for (const auto& [k, v] : parse_kv_list(rest.substr(colon + 1), "dataset")) {
        const std::string where = "dataset " + k;
        if (k == "n") spec.n = io::parse_number<std::size_t>(v, where);
        else if (k == "p") spec.p = io::parse_number<double>(v, where);
        else if (k == "p_in") spec.p_in = io::parse_number<double>(v, where);
        else if (k == "p_out") spec.p_out = io::parse_number<double>(v, where);
        else if (k == "dim") spec.feature_dim = io::parse_number<std::size_t>(v, where);
        else if (k == "classes") spec.num_classes = io::parse_number<std::size_t>(v, where);
        else if (k == "signal") spec.feature_signal = io::parse_number<double>(v, where);
        else if (k == "seed") spec.seed = io::parse_number<std::uint64_t>(v, where);
        else throw ConfigError("dataset: unknown synthetic parameter '" + k + "'");
    }
    return spec;
}

/// Directory of a named dataset: the path itself when it exists, else the
/// same name under $LGNN_DATA_DIR.
inline std::optional<std::filesystem::path> find_dataset_dir(const std::string& name) {
    namespace fs = std::filesystem;
    if (name.empty()) return std::nullopt;
    if (fs::is_directory(name)) return fs::path(name);
    if (const char* root = std::getenv("LGNN_DATA_DIR")) {
        fs::path p = fs::path(root) / name;
        if (fs::is_directory(p)) return p;
    }
    return std::nullopt;
}

inline GraphBundle load_dataset(const ExperimentConfig& c) {
    if (c.dataset.rfind("synthetic:", 0) == 0) {
        GraphBundle g = synthetic_graph(parse_synthetic(c.dataset));
        g.normalize_features = false;
        return g;
    }
    auto dir = find_dataset_dir(c.dataset);
    if (!dir) throw DataError("dataset '" + c.dataset + "' not found");
    return load_bundle(*dir, LoadOptions{c.normalize_features});
}

// ---------------------------------------------------------------------------
// Results

inline nlohmann::json result_to_json(const RunResult& r, const std::string& fingerprint,
                                     const ExperimentConfig& resolved) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : r.per_seed) {
        nlohmann::json e = {{"seed", s.seed},
                            {"ok", s.ok},
                            {"test_accuracy", s.test.accuracy},
                            {"micro_f", s.test.micro_f},
                            {"macro_f", s.test.macro_f},
                            {"best_epoch", s.best_epoch},
                            {"best_val_accuracy", s.best_val_acc},
                            {"epochs_run", s.epochs_run},
                            {"wall_ms", s.wall_ms}};
        if (!s.ok) e["error"] = s.error;
        per.push_back(std::move(e));
    }
    return {{"schema_version", kResultSchemaVersion},
            {"config_fingerprint", fingerprint},
            {"dataset", resolved.dataset},
            {"model", resolved.model.model},
            {"localization", to_string(*resolved.model.localization)},
            {"seeds", resolved.train.seeds},
            {"per_seed", per},
            {"aggregate",
             {{"mean_accuracy", r.accuracy.mean},
              {"std_accuracy", r.accuracy.std},
              {"mean_micro_f", r.micro_f.mean},
              {"std_micro_f", r.micro_f.std},
              {"mean_macro_f", r.macro_f.mean},
              {"std_macro_f", r.macro_f.std},
              {"std_undefined", r.std_undefined},
              {"failures", r.failures}}},
            {"param_counts",
             {{"global", r.params.global}, {"localization", r.params.localization}, {"total", r.params.total}}}};
}

inline std::string curves_tsv(const RunResult& r) {
    std::ostringstream os;
    os << "seed\tepoch\ttrain_loss\tval_acc\tval_loss\n";
    for (const auto& s : r.per_seed)
        for (const auto& e : s.curve)
            os << s.seed << '\t' << e.epoch << '\t' << io::format_double(e.train_loss) << '\t'
               << io::format_double(e.val_acc) << '\t' << io::format_double(e.val_loss) << '\n';
    return os.str();
}

/// Collects files in memory and publishes them into the output directory
/// only once everything succeeded.
class OutputSet {
public:
    void add(std::string rel, std::string content) { files_.emplace_back(std::move(rel), std::move(content)); }

    void commit(const std::filesystem::path& dir, bool overwrite) const {
        namespace fs = std::filesystem;
        if (fs::exists(dir)) {
            if (!overwrite) throw Error("output '" + dir.string() + "' exists (pass --overwrite)");
            fs::remove_all(dir);
        }
        fs::path tmp = dir;
        tmp += ".partial";
        fs::remove_all(tmp);
        for (const auto& [rel, content] : files_) {
            fs::path p = tmp / rel;
            fs::create_directories(p.parent_path());
            io::write_text(p, content);
        }
        fs::rename(tmp, dir);
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

/// Fails early, before any training, if the output would be refused.
inline void check_output_dir(const std::string& out, bool overwrite) {
    if (out.empty()) throw ConfigError("no output directory given");
    if (std::filesystem::exists(out) && !overwrite)
        throw Error("output '" + out + "' exists (pass --overwrite)");
}

inline std::optional<SplitSpec> resample_spec(const ExperimentConfig& c) {
    if (!c.split.resample_per_seed) return std::nullopt;
    SplitSpec s = c.split.to_spec();
    s.mode = SplitMode::seeded_random;
    return s;
}

inline RunResult run_experiment(const ExperimentConfig& c, const GraphBundle& g) {
    const auto mc = build_model_config(c.model, g.feature_dim, g.num_classes);
    const auto rs = resample_spec(c);
    return c.train.precision == Precision::f64 ? multi_run<double>(g, mc, c.train, rs)
                                               : multi_run<float>(g, mc, c.train, rs);
}

inline std::string percent(double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << 100.0 * x;
    return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct TrainOutput {
    ExperimentConfig resolved;
    RunResult result;
    nlohmann::json result_json;
};

inline TrainOutput cmd_train(const ExperimentConfig& config, bool overwrite, std::ostream& log) {
    TrainOutput o;
    o.resolved = resolve_config(config);
    check_output_dir(o.resolved.out, overwrite);
    GraphBundle g = make_splits(load_dataset(o.resolved), o.resolved.split.to_spec());
    o.result = run_experiment(o.resolved, g);
    const std::string fp = config_fingerprint(o.resolved);
    o.result_json = result_to_json(o.result, fp, o.resolved);

    OutputSet files;
    files.add("result.json", o.result_json.dump(2) + "\n");
    files.add("curves.tsv", curves_tsv(o.result));
    files.add("resolved_config.json", to_json(o.resolved).dump(2) + "\n");
    files.commit(o.resolved.out, overwrite);

    const auto& r = o.result;
    log << o.resolved.model.model << " on " << g.name << ": accuracy " << percent(r.accuracy.mean) << " +- "
        << percent(r.accuracy.std) << ", macro-F " << percent(r.macro_f.mean) << " over "
        << r.per_seed.size() - r.failures << "/" << r.per_seed.size() << " seeds; params " << r.params.total
        << " (global " << r.params.global << ", localization " << r.params.localization << "); fingerprint " << fp
        << "\n";
    for (const auto& s : r.per_seed)
        if (!s.ok) log << "seed " << s.seed << " failed: " << s.error << "\n";
    return o;
}

struct AblationOutput {
    ExperimentConfig resolved;
    std::vector<AblationEntry> entries;
};

inline AblationOutput cmd_ablate(const ExperimentConfig& config, bool overwrite, std::ostream& log) {
    AblationOutput o;
    o.resolved = resolve_config(config);
    check_output_dir(o.resolved.out, overwrite);
    GraphBundle g = make_splits(load_dataset(o.resolved), o.resolved.split.to_spec());
    ModelOptions base = o.resolved.model;
    const auto rs = resample_spec(o.resolved);
    o.entries = o.resolved.train.precision == Precision::f64 ? ablation_suite<double>(g, base, o.resolved.train, rs)
                                                             : ablation_suite<float>(g, base, o.resolved.train, rs);

    OutputSet files;
    std::ostringstream table;
    table << "variant\tlocalization\tmean_accuracy\tstd_accuracy\tseeds\n";
    for (const auto& e : o.entries) {
        ExperimentConfig vc = o.resolved;
        vc.model.localization = e.localization;
        vc.out = (std::filesystem::path(o.resolved.out) / e.variant).string();
        const auto j = result_to_json(e.result, config_fingerprint(vc), vc);
        files.add(e.variant + "/result.json", j.dump(2) + "\n");
        files.add(e.variant + "/curves.tsv", curves_tsv(e.result));
        files.add(e.variant + "/resolved_config.json", to_json(vc).dump(2) + "\n");
        table << e.variant << '\t' << to_string(e.localization) << '\t' << io::format_double(e.result.accuracy.mean)
              << '\t' << io::format_double(e.result.accuracy.std) << '\t'
              << e.result.per_seed.size() - e.result.failures << '\n';
        log << e.variant << ": " << percent(e.result.accuracy.mean) << " +- " << percent(e.result.accuracy.std)
            << "\n";
    }
    files.add("ablation.tsv", table.str());
    files.add("resolved_config.json", to_json(o.resolved).dump(2) + "\n");
    files.commit(o.resolved.out, overwrite);
    return o;
}

/// Draws every parameter uniformly within its Glorot range, so that gate
/// maps are nonzero and every path of the layer is exercised.
template <class Rng>
void randomize_params(ParamRegistry<double>& reg, Rng& rng) {
    for (auto& p : reg.params()) {
        const double lim = std::sqrt(6.0 / static_cast<double>(p.tensor.rows() + p.tensor.cols()));
        std::uniform_real_distribution<double> u(-lim, lim);
        for (auto& w : p.tensor.values()) w = u(rng);
    }
}

/// Gradient check of the full training objective (dropout off) on `g`,
/// with every node labeled.
inline GradCheckReport gradcheck_model(const GraphBundle& g, const ModelConfig& mc, std::uint64_t seed,
                                       double eps = 1e-4) {
    std::mt19937_64 rng(seed);
    auto model = create_model<double>(mc, rng);
    randomize_params(model.registry, rng);
    const Tensor<double> x = g.feature_tensor<double>();
    std::vector<std::size_t> nodes(g.num_nodes);
    for (std::size_t v = 0; v < nodes.size(); ++v) nodes[v] = v;
    std::vector<NamedParam> params;
    for (auto& p : model.registry.params()) params.push_back({p.name, p.tensor});
    auto forward = [&](Tape<double>& tape) {
        std::mt19937_64 unused(0);
        auto fr = model_forward(tape, model, g, x, false, unused);
        return loss_total(tape, fr.probs, g.labels, nodes, model.registry, fr.gates, mc.lambda_g, mc.lambda_l,
                          mc.lambda, mc.ce_reduction)
            .total;
    };
    return grad_check(forward, params, eps);
}

struct GradcheckOutput {
    GradCheckReport report;
    bool passed = false;
};

inline GradcheckOutput cmd_gradcheck(const ExperimentConfig& config, double tolerance, bool corrupt_backward,
                                     std::ostream& log) {
    ExperimentConfig c = resolve_config(config);
    if (c.dataset.empty()) c.dataset = "synthetic:er:n=30,p=0.2";
    GraphBundle g = load_dataset(c);
    if (g.num_nodes > 200) throw ConfigError("gradcheck: graph too large (" + std::to_string(g.num_nodes) + " nodes)");
    ModelOptions mo = c.model;
    mo.dropout = 0;
    auto mc = build_model_config(mo, g.feature_dim, g.num_classes);
    mc.debug_corrupt_backward = corrupt_backward;
    GradcheckOutput o;
    o.report = gradcheck_model(g, mc, c.train.seeds.front());
    o.passed = o.report.passes(tolerance);
    log << std::left << std::setw(28) << "parameter" << std::right << std::setw(10) << "elements" << std::setw(14)
        << "rel_err" << "\n";
    for (const auto& e : o.report.entries) {
        log << std::left << std::setw(28) << e.name << std::right << std::setw(10) << e.elements << std::setw(14)
            << std::scientific << std::setprecision(3) << e.rel_err << std::defaultfloat << "\n";
    }
    log << (o.passed ? "PASS" : "FAIL") << " max rel_err " << std::scientific << std::setprecision(3)
        << o.report.max_rel_err() << std::defaultfloat << " (tolerance " << tolerance << ")\n";
    return o;
}

inline IngestReport cmd_ingest(const std::string& content, const std::string& cites, const std::string& out,
                               bool overwrite, std::ostream& log) {
    check_output_dir(out, overwrite);
    namespace fs = std::filesystem;
    fs::path tmp = out;
    tmp += ".partial";
    fs::remove_all(tmp);
    IngestReport rep;
    try {
        rep = ingest_content_cites(content, cites, tmp);
    } catch (...) {
        fs::remove_all(tmp);
        throw;
    }
    if (fs::exists(out)) fs::remove_all(out);
    fs::rename(tmp, out);
    log << "nodes " << rep.num_nodes << ", classes " << rep.num_classes << ", features " << rep.feature_dim
        << ", citation records " << rep.citation_records << ", undirected edges " << rep.undirected_edges
        << ", dropped (unknown id) " << rep.dropped_unknown << ", dropped (self) " << rep.dropped_self
        << ", duplicates " << rep.duplicate_records << "\n";
    return rep;
}

inline ParamCounts cmd_params(const ExperimentConfig& config, std::size_t feature_dim, std::size_t num_classes,
                              std::ostream& log) {
    ExperimentConfig c = resolve_config(config);
    if (!c.dataset.empty()) {
        GraphBundle g = load_dataset(c);
        feature_dim = g.feature_dim;
        num_classes = g.num_classes;
    }
    auto mc = build_model_config(c.model, feature_dim, num_classes);
    ParamCounts pc = param_count(mc);
    for (const auto& t : pc.tensors) {
        log << std::left << std::setw(30) << t.name << std::right << std::setw(6) << t.rows << " x " << std::left
            << std::setw(6) << t.cols << std::right << std::setw(10) << t.rows * t.cols << "  "
            << (t.group == ParamGroup::global ? "global" : "localization") << "\n";
    }
    log << "global " << pc.global << "\nlocalization " << pc.localization << "\ntotal " << pc.total << "\n";
    return pc;
}

}  // namespace lgnn
