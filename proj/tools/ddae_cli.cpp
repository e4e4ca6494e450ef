// ddae_cli: train, evaluate, reconstruct, grid-search and report subcommands.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 partial
// model failure.

#include <ddae/experiments/config.hpp>
#include <ddae/experiments/runs.hpp>
#include <ddae/model_io.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ddae;
using namespace ddae::experiments;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kPartial = 3 };

struct Common {
    std::string config;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed_override;
    std::vector<std::string> algorithms;
};

void add_common(CLI::App* sub, Common& c, bool with_algorithms) {
    sub->add_option("--config", c.config, "experiment config (JSON)")->required();
    sub->add_option("--out-dir", c.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed-override", c.seed_override, "replace the config's seeds list");
    if (with_algorithms) {
        sub->add_option("--algorithm", c.algorithms, "restrict to these algorithms");
    }
}

ExperimentConfig prepare(const Common& c) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed_override) {
        cfg.seeds = {*c.seed_override};
    }
    if (!c.algorithms.empty()) {
        for (const auto& a : c.algorithms) {
            if (algorithm_rank(a) >= known_algorithms().size()) {
                throw ConfigError("unknown algorithm '" + a + "'");
            }
        }
        cfg.algorithms = c.algorithms;
    }
    return cfg;
}

int cmd_train(const Common& c, bool save_models) {
    const ExperimentConfig cfg = prepare(c);
    const ClassificationReport report = run_classification(cfg, c.out_dir, save_models);
    for (const auto& r : report.runs) {
        if (r.failed) {
            std::cerr << r.algorithm << " seed " << r.seed << " failed: " << r.error << '\n';
        } else {
            std::printf("%-9s seed %-4llu train %7.3f%%  test %7.3f%%  (%.1fs)\n",
                        r.algorithm.c_str(), static_cast<unsigned long long>(r.seed),
                        r.train_accuracy, r.test_accuracy, r.seconds);
        }
    }
    std::cout << "wrote " << (fs::path(c.out_dir) / "results.md").string() << '\n';
    return report.partial_failure ? kPartial : kOk;
}

int cmd_evaluate(const Common& c, const std::vector<std::string>& model_args) {
    const ExperimentConfig cfg = prepare(c);
    std::vector<fs::path> models(model_args.begin(), model_args.end());
    if (models.empty() && fs::is_directory(c.out_dir)) {
        for (const auto& entry : fs::directory_iterator(c.out_dir)) {
            if (entry.path().extension() == ".ddae") {
                models.push_back(entry.path());
            }
        }
        std::sort(models.begin(), models.end());
    }
    if (models.empty()) {
        throw ConfigError("no model files given and none found in " + c.out_dir);
    }
    const Splits data = load_splits(cfg);
    fs::create_directories(c.out_dir);
    auto out = std::ofstream(fs::path(c.out_dir) / "evaluation.csv", std::ios::binary);
    out << "model,test_accuracy\n";
    for (const auto& path : models) {
        DDAEModel model;
        try {
            model = load_model(path.string());
        } catch (const Error& e) {
            throw DataError(e.what());
        }
        const Prediction p = ddae_predict(model, data.test.samples);
        const double acc = accuracy_percent(p.labels, data.test.labels);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", acc);
        out << path.filename().string() << ',' << buf << '\n';
        std::printf("%s: test %.3f%%\n", path.filename().string().c_str(), acc);
    }
    return kOk;
}

int cmd_reconstruct(const Common& c) {
    const ExperimentConfig cfg = prepare(c);
    const auto variants = run_reconstruction(cfg, c.out_dir);
    for (const auto& v : variants) {
        std::printf("%-15s mean test KL %.4f  %s\n", v.name.c_str(), v.mean_test_kl,
                    v.converged ? "converged" : "NOT converged");
    }
    return kOk;
}

int cmd_grid_search(const Common& c) {
    const ExperimentConfig cfg = prepare(c);
    for (const auto& g : run_grid_search(cfg, c.out_dir)) {
        std::printf("%-9s gamma %-10g C %-10g validation %.3f%%\n", g.algorithm.c_str(),
                    g.result.gamma, g.result.C, g.result.validation_accuracy);
    }
    return kOk;
}

int cmd_report(const Common& c) {
    const ReportCheck check = rebuild_report(c.out_dir);
    for (const auto& m : check.mismatches) {
        std::cerr << "mismatch: " << m << '\n';
    }
    std::cout << "checked " << check.rows.size() << " rows, rewrote "
              << (fs::path(c.out_dir) / "results.md").string() << '\n';
    return check.mismatches.empty() ? kOk : kData;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DropConnect stacked autoencoder + kernel ELM experiments"};
    app.set_version_flag("--version", std::string(DDAE_VERSION));
    app.require_subcommand(1);

    Common c;
    bool save_models = false;
    std::vector<std::string> model_args;

    auto* train_cmd = app.add_subcommand("train", "run the classification benchmark");
    add_common(train_cmd, c, true);
    train_cmd->add_flag("--save-models", save_models, "write stacked models as .ddae files");

    auto* eval_cmd = app.add_subcommand("evaluate", "score saved models on the test split");
    add_common(eval_cmd, c, false);
    eval_cmd->add_option("--model", model_args, "model file(s); default: *.ddae in --out-dir");

    auto* recon_cmd = app.add_subcommand("reconstruct", "weight and reconstruction images");
    add_common(recon_cmd, c, false);

    auto* grid_cmd = app.add_subcommand("grid-search", "KELM hyperparameter surfaces");
    add_common(grid_cmd, c, true);

    auto* report_cmd =
        app.add_subcommand("report", "recheck results.csv against prediction dumps");
    add_common(report_cmd, c, false);
    // report only reads the output directory
    report_cmd->get_option("--config")->required(false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*train_cmd) {
            return cmd_train(c, save_models);
        }
        if (*eval_cmd) {
            return cmd_evaluate(c, model_args);
        }
        if (*recon_cmd) {
            return cmd_reconstruct(c);
        }
        if (*grid_cmd) {
            return cmd_grid_search(c);
        }
        return cmd_report(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kPartial;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
}
