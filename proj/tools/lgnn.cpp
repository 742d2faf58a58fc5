#include <algorithm>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lgnn/lgnn.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> dataset, model, localization, seeds, split, precision, out;
    std::optional<std::size_t> hidden, heads, val_size, test_size, train_per_class, max_epochs, patience, threads;
    std::optional<double> lambda_g, lambda_l, lambda, lr, dropout;
    bool overwrite = false;
};

void add_shared(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON experiment config; flags override it");
    cmd->add_option("--dataset", o.dataset, "bundle directory, name under $LGNN_DATA_DIR, or synthetic:er|sbm:k=v,...");
    cmd->add_option("--model", o.model, "gcn, gat, gin, lgcn, lgat, lgin, gcn-film, gat-film, gin-film");
    cmd->add_option("--hidden", o.hidden, "hidden width (per head for gat)");
    cmd->add_option("--heads", o.heads, "attention heads of gat hidden layers");
    cmd->add_option("--localization", o.localization, "none, node, edge, both, film");
    cmd->add_option("--lambda-g", o.lambda_g, "weight decay on global parameters");
    cmd->add_option("--lambda-l", o.lambda_l, "weight decay on localization parameters");
    cmd->add_option("--lambda", o.lambda, "gate penalty weight");
    cmd->add_option("--dropout", o.dropout, "dropout rate");
    cmd->add_option("--lr", o.lr, "learning rate");
    cmd->add_option("--max-epochs", o.max_epochs, "epoch limit");
    cmd->add_option("--patience", o.patience, "early stopping patience");
    cmd->add_option("--seeds", o.seeds, "number of seeds (0..n-1) or a comma separated list");
    cmd->add_option("--val-size", o.val_size, "validation nodes for random splits")->check(CLI::IsMember({100, 500}));
    cmd->add_option("--test-size", o.test_size, "test nodes for random splits");
    cmd->add_option("--train-per-class", o.train_per_class, "labeled nodes per class for random splits");
    cmd->add_option("--split", o.split, "fixed, auto or random:<seed>");
    cmd->add_option("--precision", o.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--threads", o.threads, "worker threads for seeds");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_flag("--overwrite", o.overwrite, "replace an existing output directory");
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    if (s.find(',') == std::string::npos) {
        const auto n = lgnn::io::parse_number<std::uint64_t>(s, "--seeds");
        for (std::uint64_t i = 0; i < n; ++i) seeds.push_back(i);
        return seeds;
    }
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        if (comma > pos) seeds.push_back(lgnn::io::parse_number<std::uint64_t>(s.substr(pos, comma - pos), "--seeds"));
        pos = comma + 1;
    }
    return seeds;
}

lgnn::ExperimentConfig build_config(const Overrides& o) {
    lgnn::ExperimentConfig c = o.config.empty() ? lgnn::ExperimentConfig{} : lgnn::load_config(o.config);
    if (o.dataset) c.dataset = *o.dataset;
    if (o.model) c.model.model = *o.model;
    if (o.localization) c.model.localization = lgnn::parse_localization(*o.localization);
    if (o.hidden) c.model.hidden = *o.hidden;
    if (o.heads) c.model.heads = *o.heads;
    if (o.lambda_g) c.model.lambda_g = *o.lambda_g;
    if (o.lambda_l) c.model.lambda_l = *o.lambda_l;
    if (o.lambda) c.model.lambda = *o.lambda;
    if (o.dropout) c.model.dropout = *o.dropout;
    if (o.lr) c.train.adam.lr = *o.lr;
    if (o.max_epochs) c.train.max_epochs = *o.max_epochs;
    if (o.patience) c.train.patience = *o.patience;
    if (o.threads) c.train.threads = *o.threads;
    if (o.seeds) c.train.seeds = parse_seeds(*o.seeds);
    if (o.val_size) c.split.val_size = *o.val_size;
    if (o.test_size) c.split.test_size = *o.test_size;
    if (o.train_per_class) c.split.per_class_train = *o.train_per_class;
    if (o.precision) c.train.precision = *o.precision == "f64" ? lgnn::Precision::f64 : lgnn::Precision::f32;
    if (o.out) c.out = *o.out;
    if (o.split) {
        const std::string& s = *o.split;
        if (s == "fixed" || s == "auto") {
            c.split.mode = s;
        } else if (s.rfind("random:", 0) == 0) {
            c.split.mode = "random";
            c.split.seed = lgnn::io::parse_number<std::uint64_t>(s.substr(7), "--split");
        } else {
            throw lgnn::ConfigError("--split: expected fixed, auto or random:<seed>, got '" + s + "'");
        }
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Localized graph neural networks for node classification"};
    app.require_subcommand(1);

    Overrides train_o, ablate_o, check_o, params_o;
    auto* train = app.add_subcommand("train", "train a model over several seeds");
    add_shared(train, train_o);
    auto* ablate = app.add_subcommand("ablate", "train the none/node/edge/both localization variants");
    add_shared(ablate, ablate_o);

    auto* check = app.add_subcommand("gradcheck", "compare gradients against finite differences (64-bit)");
    add_shared(check, check_o);
    double tolerance = 1e-4;
    bool corrupt = false;
    check->add_option("--tolerance", tolerance, "largest accepted relative error");
    check->add_flag("--corrupt-backward", corrupt, "insert a faulty backward rule (negative control)");

    auto* ingest = app.add_subcommand("ingest", "convert content/cites files into a bundle");
    std::string content, cites, ingest_out;
    bool ingest_overwrite = false;
    ingest->add_option("--content", content, "content file")->required();
    ingest->add_option("--cites", cites, "cites file")->required();
    ingest->add_option("--out", ingest_out, "bundle directory")->required();
    ingest->add_flag("--overwrite", ingest_overwrite, "replace an existing bundle");

    auto* params = app.add_subcommand("params", "print parameter counts");
    add_shared(params, params_o);
    std::size_t feature_dim = 1433, num_classes = 7;
    params->add_option("--feature-dim", feature_dim, "input feature width when no dataset is given");
    params->add_option("--num-classes", num_classes, "number of classes when no dataset is given");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*train) {
            lgnn::cmd_train(build_config(train_o), train_o.overwrite, std::cout);
        } else if (*ablate) {
            lgnn::cmd_ablate(build_config(ablate_o), ablate_o.overwrite, std::cout);
        } else if (*check) {
            auto c = build_config(check_o);
            c.train.precision = lgnn::Precision::f64;
            if (!lgnn::cmd_gradcheck(c, tolerance, corrupt, std::cout).passed) return 2;
        } else if (*ingest) {
            lgnn::cmd_ingest(content, cites, ingest_out, ingest_overwrite, std::cout);
        } else if (*params) {
            lgnn::cmd_params(build_config(params_o), feature_dim, num_classes, std::cout);
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
    return 0;
}
