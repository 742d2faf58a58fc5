#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using lgnn::Tensor;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    lgnn::ParamRegistry<double> reg;
    auto w = Tensor<double>::from_rows({{0.5, -1.5}, {2.0, 0.0}}, true);
    reg.add("w", w, lgnn::ParamGroup::global);
    lgnn::Adam<double> opt(reg, {});
    const auto before = w.values();
    for (int i = 0; i < 5; ++i) opt.step();
    EXPECT_EQ(w.values(), before);
    w.grad();
    opt.step();
    EXPECT_EQ(w.values(), before);
}

TEST(Adam, FirstStepsMatchHandComputedUpdates) {
    lgnn::ParamRegistry<double> reg;
    auto w = Tensor<double>::from_rows({{1.0}}, true);
    reg.add("w", w, lgnn::ParamGroup::global);
    lgnn::AdamConfig cfg;
    lgnn::Adam<double> opt(reg, cfg);
    double m = 0, v = 0, x = 1.0;
    for (int t = 1; t <= 3; ++t) {
        const double g = 2 * x;  // d/dx x^2
        w.grad()[0] = g;
        opt.step();
        w.zero_grad();
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
        x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        EXPECT_NEAR(w(0, 0), x, 1e-14);
    }
}

TEST(Metrics, WorkedExamples) {
    auto m = lgnn::evaluate_predictions({0, 1, 1}, {0, 1, 0}, {0, 1, 2}, 2);
    EXPECT_NEAR(m.accuracy, 2.0 / 3.0, 1e-15);
    // class 0: tp 1, fn 1 -> F1 2/3; class 1: tp 1, fp 1 -> F1 2/3
    EXPECT_NEAR(m.macro_f, 2.0 / 3.0, 1e-15);
    auto perfect = lgnn::evaluate_predictions({2, 0, 1}, {2, 0, 1}, {0, 1, 2}, 3);
    EXPECT_EQ(perfect.accuracy, 1.0);
    EXPECT_EQ(perfect.micro_f, 1.0);
    EXPECT_EQ(perfect.macro_f, 1.0);
    auto masked = lgnn::evaluate_predictions({0, 1, 1}, {0, 1, 0}, {0, 1}, 2);
    EXPECT_EQ(masked.accuracy, 1.0);
    EXPECT_EQ(masked.count, 2u);
}

TEST(Metrics, MicroFEqualsAccuracyAndAllInUnitInterval) {
    std::mt19937_64 rng(71);
    std::uniform_int_distribution<int> cls(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> p(40), y(40);
        for (auto& v : p) v = cls(rng);
        for (auto& v : y) v = cls(rng);
        std::vector<std::size_t> mask;
        for (std::size_t i = 0; i < 40; i += 1 + static_cast<std::size_t>(trial % 3)) mask.push_back(i);
        auto m = lgnn::evaluate_predictions(p, y, mask, 5);
        EXPECT_NEAR(m.micro_f, m.accuracy, 1e-12);
        for (double x : {m.accuracy, m.micro_f, m.macro_f}) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
    }
}

TEST(Metrics, ArgmaxTiesGoToLowestClass) {
    auto probs = Tensor<double>::from_rows({{0.4, 0.4, 0.2}, {0.1, 0.45, 0.45}, {0.2, 0.3, 0.5}});
    EXPECT_EQ(lgnn::argmax_rows(probs), (std::vector<int>{0, 1, 2}));
    auto m = lgnn::evaluate(probs, {0, 2, 2}, {0, 1, 2});
    EXPECT_NEAR(m.accuracy, 2.0 / 3.0, 1e-15);
}

TEST(Aggregate, SampleStdAndFlags) {
    auto a = lgnn::aggregate_values({0.8, 0.8, 0.8});
    EXPECT_EQ(a.std, 0.0);
    auto b = lgnn::aggregate_values({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(b.mean, 2.5);
    EXPECT_NEAR(b.std, std::sqrt(5.0 / 3.0), 1e-15);
    std::vector<lgnn::SeedResult> one(1);
    one[0].test.accuracy = 0.7;
    auto r = lgnn::aggregate_runs(one, {});
    EXPECT_TRUE(r.std_undefined);
    EXPECT_EQ(r.accuracy.std, 0.0);
    std::vector<lgnn::SeedResult> mixed(3);
    mixed[0].test.accuracy = 0.5;
    mixed[1].ok = false;
    mixed[2].test.accuracy = 0.7;
    auto rm = lgnn::aggregate_runs(mixed, {});
    EXPECT_EQ(rm.failures, 1u);
    EXPECT_NEAR(rm.accuracy.mean, 0.6, 1e-15);
    EXPECT_FALSE(rm.std_undefined);
}

namespace {

lgnn::GraphBundle sbm(std::size_t n, std::uint64_t seed) {
    lgnn::SyntheticSpec s;
    s.kind = lgnn::SyntheticKind::sbm;
    s.n = n;
    s.p_in = 0.3;
    s.p_out = 0.03;
    s.feature_dim = 8;
    s.feature_signal = 0.5;
    s.seed = seed;
    return lgnn::synthetic_graph(s);
}

lgnn::GraphBundle with_splits(const lgnn::GraphBundle& g, std::size_t per_class, std::size_t val, std::size_t test) {
    lgnn::SplitSpec s;
    s.per_class_train = per_class;
    s.val_size = val;
    s.test_size = test;
    s.seed = 9;
    return lgnn::make_splits(g, s);
}

lgnn::TrainConfig short_config(std::size_t epochs, std::size_t patience) {
    lgnn::TrainConfig t;
    t.max_epochs = epochs;
    t.patience = patience;
    t.seeds = {0, 1, 2};
    return t;
}

}  // namespace

TEST(Train, SbmLossDecreasesOverFirstTenEpochs) {
    auto g = with_splits(sbm(30, 72), 5, 10, 10);
    for (const char* m : {"gcn", "lgcn"}) {
        lgnn::ModelOptions o;
        o.model = m;
        o.dropout = 0;  // the recorded loss is otherwise a dropout sample
        auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
        auto tc = short_config(200, 200);
        auto out = lgnn::train_run<double>(g, cfg, tc, 0);
        ASSERT_GE(out.result.curve.size(), 10u);
        for (std::size_t e = 1; e < 10; ++e)
            EXPECT_LT(out.result.curve[e].train_loss, out.result.curve[e - 1].train_loss) << m << " epoch " << e + 1;
    }
}

TEST(Train, DeterministicForSameSeed) {
    auto g = with_splits(sbm(60, 73), 5, 20, 20);
    lgnn::ModelOptions o;
    auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
    auto tc = short_config(40, 40);
    auto a = lgnn::train_run<float>(g, cfg, tc, 3).result;
    auto b = lgnn::train_run<float>(g, cfg, tc, 3).result;
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss);
        EXPECT_EQ(a.curve[i].val_loss, b.curve[i].val_loss);
    }
    EXPECT_EQ(a.test.accuracy, b.test.accuracy);
    EXPECT_EQ(a.best_epoch, b.best_epoch);
    auto c = lgnn::train_run<float>(g, cfg, tc, 4).result;
    EXPECT_NE(a.curve[0].train_loss, c.curve[0].train_loss);
}

TEST(Train, RestoresBestValidationEpoch) {
    auto g = with_splits(sbm(80, 74), 5, 30, 30);
    lgnn::ModelOptions o;
    o.model = "gcn";
    auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
    auto tc = short_config(120, 15);
    auto out = lgnn::train_run<double>(g, cfg, tc, 1);
    const auto& r = out.result;
    EXPECT_LE(r.best_epoch, r.epochs_run);
    EXPECT_GE(r.best_epoch, 1u);
    // the monitored value never improves after best_epoch
    const auto& best = r.curve[r.best_epoch - 1];
    for (std::size_t e = r.best_epoch; e < r.curve.size(); ++e)
        EXPECT_FALSE(r.curve[e].val_acc > best.val_acc ||
                     (r.curve[e].val_acc == best.val_acc && r.curve[e].val_loss < best.val_loss));
    if (r.epochs_run < tc.max_epochs) {
        EXPECT_EQ(r.epochs_run - r.best_epoch, tc.patience);
    }
    // restored parameters reproduce the best epoch's validation numbers
    auto tape = lgnn::Tape<double>::inference();
    std::mt19937_64 unused(0);
    auto x = g.feature_tensor<double>();
    auto probs = lgnn::model_forward(tape, out.model, g, x, false, unused).probs;
    EXPECT_EQ(lgnn::evaluate(probs, g.labels, g.masks.val).accuracy, best.val_acc);
    EXPECT_NEAR(lgnn::ops::nll_from_probs(tape, probs, g.labels, g.masks.val).item() /
                    static_cast<double>(g.masks.val.size()),
                best.val_loss, 1e-12);
}

TEST(Train, DivergenceRaisesDiagnostic) {
    auto g = with_splits(sbm(30, 75), 5, 10, 10);
    lgnn::ModelOptions o;
    o.model = "gcn";
    auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
    auto tc = short_config(50, 50);
    tc.adam.lr = 1e300;
    try {
        lgnn::train_run<double>(g, cfg, tc, 0);
        FAIL() << "expected TrainingDiverged";
    } catch (const lgnn::TrainingDiverged& e) {
        EXPECT_NE(std::string(e.what()).find("seed 0"), std::string::npos) << e.what();
    }
}

TEST(Train, ConfigValidation) {
    lgnn::TrainConfig t;
    t.patience = 600;
    EXPECT_THROW(t.validate(), lgnn::Error);
    t = {};
    t.seeds.clear();
    EXPECT_THROW(t.validate(), lgnn::Error);
    auto g = sbm(30, 76);
    lgnn::ModelOptions o;
    auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
    EXPECT_THROW(lgnn::train_run<float>(g, cfg, {}, 0), lgnn::Error);  // no masks
}

TEST(MultiRun, OneEntryPerSeedAndThreadIndependent) {
    auto g = with_splits(sbm(60, 77), 5, 20, 20);
    lgnn::ModelOptions o;
    o.model = "gcn";
    auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
    auto tc = short_config(30, 30);
    auto seq = lgnn::multi_run<float>(g, cfg, tc);
    tc.threads = 3;
    auto par = lgnn::multi_run<float>(g, cfg, tc);
    ASSERT_EQ(seq.per_seed.size(), 3u);
    ASSERT_EQ(par.per_seed.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(seq.per_seed[i].seed, tc.seeds[i]);
        EXPECT_EQ(seq.per_seed[i].test.accuracy, par.per_seed[i].test.accuracy);
        EXPECT_EQ(seq.per_seed[i].curve.back().train_loss, par.per_seed[i].curve.back().train_loss);
    }
    EXPECT_EQ(seq.accuracy.mean, par.accuracy.mean);
    EXPECT_EQ(seq.params.total, lgnn::param_count(cfg).total);
}

TEST(MultiRun, FailingSeedsAreRecorded) {
    auto g = with_splits(sbm(30, 78), 5, 10, 10);
    lgnn::ModelOptions o;
    o.model = "gcn";
    auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
    auto tc = short_config(20, 20);
    tc.adam.lr = 1e300;
    auto r = lgnn::multi_run<double>(g, cfg, tc);
    EXPECT_EQ(r.failures, 3u);
    for (const auto& s : r.per_seed) {
        EXPECT_FALSE(s.ok);
        EXPECT_FALSE(s.error.empty());
    }
}

TEST(MultiRun, ResampledSplitsDifferPerSeed) {
    auto g = sbm(80, 79);
    lgnn::ModelOptions o;
    o.model = "gcn";
    auto cfg = lgnn::build_model_config(o, g.feature_dim, g.num_classes);
    auto tc = short_config(5, 5);
    lgnn::SplitSpec s;
    s.per_class_train = 5;
    s.val_size = 20;
    s.test_size = 20;
    auto r = lgnn::multi_run<float>(g, cfg, tc, s);
    EXPECT_EQ(r.failures, 0u);
    EXPECT_EQ(r.per_seed.size(), 3u);
    auto next = s;
    next.seed += 1;
    EXPECT_NE(lgnn::make_splits(g, s).masks, lgnn::make_splits(g, next).masks);
}

TEST(Ablation, FourVariantsShareSeeds) {
    auto g = with_splits(sbm(40, 80), 5, 10, 10);
    lgnn::ModelOptions o;
    auto tc = short_config(5, 5);
    auto suite = lgnn::ablation_suite<float>(g, o, tc);
    ASSERT_EQ(suite.size(), 4u);
    EXPECT_EQ(suite[0].variant, "global");
    EXPECT_EQ(suite[3].variant, "full");
    EXPECT_EQ(suite[0].result.params.localization, 0u);
    EXPECT_GT(suite[3].result.params.localization, suite[1].result.params.localization);
    for (const auto& e : suite) {
        ASSERT_EQ(e.result.per_seed.size(), 3u);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(e.result.per_seed[i].seed, tc.seeds[i]);
    }
}
