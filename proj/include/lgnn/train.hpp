#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "lgnn/graph.hpp"
#include "lgnn/model.hpp"
#include "lgnn/splits.hpp"

namespace lgnn {

/// Loss became NaN/Inf during training.
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer over every tensor of a registry.
template <class T>
class Adam {
public:
    Adam(ParamRegistry<T>& registry, AdamConfig cfg) : registry_(registry), cfg_(cfg) {
        for (const auto& p : registry_.params()) {
            m_.emplace_back(p.tensor.size(), 0.0);
            v_.emplace_back(p.tensor.size(), 0.0);
        }
    }

    /// Applies one update from the current gradients; missing gradient
    /// buffers count as zero. Returns the number of elements visited.
    std::size_t step() {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::size_t visited = 0;
        auto& params = registry_.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& t = params[i].tensor;
            auto w = t.data();
            auto g = t.grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double gj = static_cast<double>(g[j]);
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
                const double mhat = m[j] / c1;
                const double vhat = v[j] / c2;
                w[j] = static_cast<T>(static_cast<double>(w[j]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
            visited += w.size();
        }
        return visited;
    }

private:
    ParamRegistry<T>& registry_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

struct Metrics {
    double accuracy = 0;
    double micro_f = 0;
    double macro_f = 0;
    std::size_t count = 0;
};

/// Accuracy, micro-F1 (pooled counts) and macro-F1 (mean of per-class F1
/// over the classes that occur in the labels or predictions of the mask).
inline Metrics evaluate_predictions(const std::vector<int>& preds, const std::vector<int>& labels,
                                    const std::vector<std::size_t>& mask, std::size_t num_classes) {
    Metrics m;
    m.count = mask.size();
    if (mask.empty()) return m;
    std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    std::vector<char> present(num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t v : mask) {
        const auto p = static_cast<std::size_t>(preds[v]);
        const auto y = static_cast<std::size_t>(labels[v]);
        present[p] = present[y] = 1;
        if (p == y) {
            ++correct;
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn[y] += 1;
        }
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(mask.size());
    double TP = 0, FP = 0, FN = 0, fsum = 0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        TP += tp[c];
        FP += fp[c];
        FN += fn[c];
        if (!present[c]) continue;
        const double denom = 2 * tp[c] + fp[c] + fn[c];
        fsum += denom > 0 ? 2 * tp[c] / denom : 0.0;
        ++classes;
    }
    m.micro_f = 2 * TP / (2 * TP + FP + FN);
    m.macro_f = classes ? fsum / static_cast<double>(classes) : 0.0;
    return m;
}

/// Row-wise argmax; ties go to the lowest class index.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& probs) {
    std::vector<int> out(probs.rows(), 0);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto r = probs.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < r.size(); ++j)
            if (r[j] > r[best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

template <class T>
Metrics evaluate(const Tensor<T>& probs, const std::vector<int>& labels, const std::vector<std::size_t>& mask) {
    return evaluate_predictions(argmax_rows(probs), labels, mask, probs.cols());
}

enum class Monitor { accuracy_then_loss, loss };
enum class Precision { f32, f64 };

struct TrainConfig {
    AdamConfig adam;
    std::size_t max_epochs = 500;
    std::size_t patience = 100;
    Monitor monitor = Monitor::accuracy_then_loss;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    Precision precision = Precision::f32;
    /// Worker threads used by multi_run; 1 runs seeds sequentially.
    std::size_t threads = 1;

    void validate() const {
        if (max_epochs == 0) throw Error("train: max_epochs must be positive");
        if (patience > max_epochs) throw Error("train: patience exceeds max_epochs");
        if (seeds.empty()) throw Error("train: need at least one seed");
        if (!(adam.lr > 0)) throw Error("train: learning rate must be positive");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0;
    double val_acc = 0;
    double val_loss = 0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    Metrics test;
    double best_val_acc = 0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    double wall_ms = 0;
    std::vector<EpochRecord> curve;
};

struct Aggregate {
    double mean = 0;
    double std = 0;
};

inline Aggregate aggregate_values(const std::vector<double>& xs) {
    Aggregate a;
    if (xs.empty()) return a;
    // shifted by the first value so identical inputs give an exact mean and zero spread
    double shift = 0;
    for (double x : xs) shift += x - xs.front();
    a.mean = xs.front() + shift / static_cast<double>(xs.size());
    if (xs.size() >= 2) {
        double s = 0;
        for (double x : xs) s += (x - a.mean) * (x - a.mean);
        a.std = std::sqrt(s / static_cast<double>(xs.size() - 1));
    }
    return a;
}

struct RunResult {
    std::vector<SeedResult> per_seed;
    Aggregate accuracy, micro_f, macro_f;
    /// Fewer than two successful seeds: std is reported as 0.
    bool std_undefined = false;
    std::size_t failures = 0;
    ParamCounts params;
};

inline RunResult aggregate_runs(std::vector<SeedResult> seeds, ParamCounts params) {
    RunResult r;
    r.per_seed = std::move(seeds);
    r.params = std::move(params);
    std::vector<double> acc, mic, mac;
    for (const auto& s : r.per_seed) {
        if (!s.ok) {
            ++r.failures;
            continue;
        }
        acc.push_back(s.test.accuracy);
        mic.push_back(s.test.micro_f);
        mac.push_back(s.test.macro_f);
    }
    r.accuracy = aggregate_values(acc);
    r.micro_f = aggregate_values(mic);
    r.macro_f = aggregate_values(mac);
    r.std_undefined = acc.size() < 2;
    return r;
}

template <class T>
struct TrainOutcome {
    Model<T> model;
    SeedResult result;
};

/// Full-graph training of one seed. Parameters are restored to the best
/// validation epoch before the test evaluation.
template <class T>
TrainOutcome<T> train_run(const GraphBundle& g, const ModelConfig& mc, const TrainConfig& tc, std::uint64_t seed) {
    mc.validate(g.feature_dim, g.num_classes);
    tc.validate();
    if (g.masks.train.empty() || g.masks.val.empty()) throw Error("train: masks not installed");
    const auto t0 = std::chrono::steady_clock::now();

    std::mt19937_64 init_rng(seed);
    std::mt19937_64 dropout_rng(seed ^ 0x9E3779B97F4A7C15ull);
    TrainOutcome<T> out{create_model<T>(mc, init_rng), {}};
    auto& model = out.model;
    SeedResult& res = out.result;
    res.seed = seed;

    const Tensor<T> x = g.feature_tensor<T>();
    Adam<T> opt(model.registry, tc.adam);
    auto best = model.registry.snapshot();
    double best_acc = -1, best_loss = INFINITY;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        try {
            {
                Tape<T> tape;
                auto fr = model_forward(tape, model, g, x, true, dropout_rng);
                auto loss = loss_total(tape, fr.probs, g.labels, g.masks.train, model.registry, fr.gates, mc.lambda_g,
                                       mc.lambda_l, mc.lambda, mc.ce_reduction);
                rec.train_loss = static_cast<double>(loss.total.item());
                tape.backward(loss.total);
            }
            opt.step();
            model.registry.zero_grad();

            auto tape = Tape<T>::inference();
            auto fr = model_forward(tape, model, g, x, false, dropout_rng);
            rec.val_acc = evaluate(fr.probs, g.labels, g.masks.val).accuracy;
            rec.val_loss = static_cast<double>(ops::nll_from_probs(tape, fr.probs, g.labels, g.masks.val).item()) /
                           static_cast<double>(g.masks.val.size());
        } catch (const NumericError& e) {
            throw TrainingDiverged("seed " + std::to_string(seed) + " epoch " + std::to_string(epoch) +
                                   ": training diverged (" + e.what() + ")");
        }
        res.curve.push_back(rec);
        res.epochs_run = epoch;

        bool improved = false;
        if (tc.monitor == Monitor::accuracy_then_loss)
            improved = rec.val_acc > best_acc || (rec.val_acc == best_acc && rec.val_loss < best_loss);
        else
            improved = rec.val_loss < best_loss;
        if (improved) {
            best_acc = rec.val_acc;
            best_loss = rec.val_loss;
            res.best_epoch = epoch;
            res.best_val_acc = rec.val_acc;
            best = model.registry.snapshot();
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }

    model.registry.restore(best);
    auto tape = Tape<T>::inference();
    auto fr = model_forward(tape, model, g, x, false, dropout_rng);
    res.test = evaluate(fr.probs, g.labels, g.masks.test);
    res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Trains every seed of `tc` with isolated state and aggregates test
/// metrics. When `resample` is given, seed s trains on splits drawn with
/// resample->seed + s; otherwise all seeds share the bundle's masks.
template <class T>
RunResult multi_run(const GraphBundle& g, const ModelConfig& mc, const TrainConfig& tc,
                    const std::optional<SplitSpec>& resample = std::nullopt) {
    tc.validate();
    std::vector<SeedResult> results(tc.seeds.size());
    auto run_one = [&](std::size_t i) {
        const std::uint64_t seed = tc.seeds[i];
        try {
            if (resample) {
                SplitSpec s = *resample;
                s.seed += seed;
                results[i] = train_run<T>(make_splits(g, s), mc, tc, seed).result;
            } else {
                results[i] = train_run<T>(g, mc, tc, seed).result;
            }
        } catch (const std::exception& e) {
            results[i].seed = seed;
            results[i].ok = false;
            results[i].error = e.what();
        }
    };
    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(tc.threads, 1), tc.seeds.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < tc.seeds.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w]() {
                for (std::size_t i = w; i < tc.seeds.size(); i += workers) run_one(i);
            });
        for (auto& t : pool) t.join();
    }
    return aggregate_runs(std::move(results), param_count(mc));
}

struct AblationEntry {
    std::string variant;  // global, node, edge, full
    Localization localization;
    RunResult result;
};

/// The four localization variants of one base architecture, trained with
/// the same seeds and otherwise identical configuration.
template <class T>
std::vector<AblationEntry> ablation_suite(const GraphBundle& g, const ModelOptions& base, const TrainConfig& tc,
                                          const std::optional<SplitSpec>& resample = std::nullopt) {
    const std::pair<const char*, Localization> variants[] = {{"global", Localization::none},
                                                             {"node", Localization::node},
                                                             {"edge", Localization::edge},
                                                             {"full", Localization::both}};
    std::vector<AblationEntry> out;
    for (auto [name, loc] : variants) {
        ModelOptions o = base;
        o.localization = loc;
        auto mc = build_model_config(o, g.feature_dim, g.num_classes);
        out.push_back({name, loc, multi_run<T>(g, mc, tc, resample)});
    }
    return out;
}

}  // namespace lgnn
