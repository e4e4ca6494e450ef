#pragma once

// Benchmark runs behind the command-line harness: accuracy tables, the
// reconstruction experiment and stand-alone KELM grid searches.

#include <ddae/autoencoder.hpp>
#include <ddae/dataset.hpp>
#include <ddae/ddae.hpp>
#include <ddae/elm.hpp>
#include <ddae/error.hpp>
#include <ddae/experiments/config.hpp>
#include <ddae/grid_search.hpp>
#include <ddae/image.hpp>
#include <ddae/model_io.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace ddae::experiments {

/// Failure to read or assemble the datasets named by a config.
class DataError : public Error {
public:
    using Error::Error;
};

struct Splits {
    Dataset train;
    Dataset test;
};

/// Loads train/test splits, harmonizes the class count and applies the
/// configured stratified subsampling.
inline Splits load_splits(const ExperimentConfig& cfg) {
    const DatasetSpec& ds = cfg.dataset;
    Splits s;
    try {
        if (ds.format == "idx") {
            s.train = load_idx(ds.train_images.string(), ds.train_labels.string());
            s.test = load_idx(ds.test_images.string(), ds.test_labels.string());
        } else {
            s.train = load_sparse_text(ds.train_path.string(), ds.dim, std::nullopt, ds.label_base);
            s.test = load_sparse_text(ds.test_path.string(), ds.dim, s.train.normalization,
                                      ds.label_base);
        }
        const int classes = std::max(s.train.num_classes, s.test.num_classes);
        s.train.num_classes = classes;
        s.test.num_classes = classes;
        if (ds.image_shape) {
            s.train.image_shape = ds.image_shape;
            s.test.image_shape = ds.image_shape;
        }
        s.train.validate();
        s.test.validate();
        Rng rng(ds.subsample_seed);
        if (ds.train_subsample > 0) {
            Rng train_rng = rng.derive(1);
            s.train = subsample(s.train, ds.train_subsample, train_rng);
        }
        if (ds.test_subsample > 0) {
            Rng test_rng = rng.derive(2);
            s.test = subsample(s.test, ds.test_subsample, test_rng);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw DataError(e.what());
    }
    return s;
}

/// Stacked-model config for one of the AE-family algorithms. The second
/// layer's seed is the run seed + 1.
inline StackConfig make_stack_config(const ExperimentConfig& cfg, const std::string& algorithm,
                                     std::uint64_t seed) {
    auto layer = [&](const LayerSpec& spec, std::uint64_t layer_seed, Regularizer reg) {
        AEConfig c;
        c.hidden_dim = spec.hidden;
        c.learning_rate = spec.learning_rate;
        c.epochs = spec.epochs;
        c.batch_size = spec.batch_size;
        c.lr_decay = spec.lr_decay;
        c.activation = cfg.activation;
        c.seed = layer_seed;
        c.regularizer = std::move(reg);
        return c;
    };
    Regularizer first = NoRegularizer{};
    Regularizer second = NoRegularizer{};
    if (algorithm == "SAE+KELM") {
        first = cfg.sparse;
        second = cfg.sparse;
    } else if (algorithm == "DAE+KELM") {
        first = cfg.denoise;
        second = cfg.denoise;
    } else if (algorithm == "DDAE") {
        first = cfg.dropconnect;
    } else if (algorithm != "AE+KELM") {
        throw ConfigError(algorithm + " is not a stacked autoencoder algorithm");
    }
    StackConfig sc;
    sc.first = layer(cfg.layers[0], seed, first);
    sc.second = layer(cfg.layers[1], seed + 1, second);
    sc.grid = cfg.grid;
    sc.scheme = cfg.scheme;
    sc.scale_by_keep_prob = cfg.scale_by_keep_prob;
    sc.fixed_head = cfg.kelm_fixed;
    return sc;
}

struct RunOutcome {
    std::string algorithm;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double seconds = 0.0;
    std::optional<double> gamma;
    std::optional<double> C;
    std::vector<int> train_predicted;
    std::vector<int> test_predicted;
    std::optional<GridSearchResult> grid;
};

/// Seeds an algorithm runs under: ELM/RELM restart `elm_restarts` times per
/// listed seed (seed, seed+1, ...); KELM is deterministic and runs once;
/// stacked models run once per listed seed.
inline std::vector<std::uint64_t> run_seeds(const ExperimentConfig& cfg,
                                            const std::string& algorithm) {
    std::vector<std::uint64_t> out;
    if (algorithm == "ELM" || algorithm == "RELM") {
        for (auto s : cfg.seeds) {
            for (std::size_t k = 0; k < cfg.elm_restarts; ++k) {
                out.push_back(s + k);
            }
        }
    } else if (algorithm == "KELM") {
        out.push_back(cfg.seeds.front());
    } else {
        out = cfg.seeds;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Trains and evaluates one (algorithm, seed) pair. Library errors are
/// captured in the outcome rather than thrown.
inline RunOutcome run_one(const ExperimentConfig& cfg, const Splits& data,
                          const std::string& algorithm, std::uint64_t seed,
                          const std::optional<std::filesystem::path>& model_path = std::nullopt) {
    RunOutcome r;
    r.algorithm = algorithm;
    r.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    try {
        const Dataset& train = data.train;
        const Dataset& test = data.test;
        const LabelEncoding targets = one_hot(train.labels, train.num_classes, cfg.scheme);
        Prediction on_train;
        Prediction on_test;
        if (algorithm == "ELM" || algorithm == "RELM") {
            Rng rng(seed);
            const bool ridge = algorithm == "RELM";
            const ELMModel m =
                elm_fit(train.samples, targets, ridge ? cfg.relm_hidden : cfg.elm_hidden,
                        ridge ? cfg.relm_C : 0.0, rng);
            on_train = elm_predict(m, train.samples);
            on_test = elm_predict(m, test.samples);
            if (ridge) {
                r.C = m.C;
            }
        } else if (algorithm == "KELM") {
            double gamma = 0.0;
            double C = 0.0;
            if (cfg.kelm_fixed) {
                std::tie(gamma, C) = *cfg.kelm_fixed;
            } else {
                r.grid = kelm_grid_search(train.samples, train.labels, train.num_classes,
                                          cfg.scheme, cfg.grid);
                gamma = r.grid->gamma;
                C = r.grid->C;
            }
            const KELMModel m = kelm_fit(train.samples, targets, gamma, C);
            on_train = kelm_predict(m, train.samples);
            on_test = kelm_predict(m, test.samples);
            r.gamma = gamma;
            r.C = C;
        } else {
            auto [model, report] = train_stack(train, make_stack_config(cfg, algorithm, seed));
            // The head's training rows are exactly the stacked features of the
            // training split, so the kernel against them is reused directly.
            on_train = kelm_predict(model.head, model.head.train_features);
            on_test = ddae_predict(model, test.samples);
            if (model_path) {
                save_model(model, model_path->string());
            }
            r.gamma = report.gamma;
            r.C = report.C;
            r.grid = std::move(report.grid);
        }
        r.train_predicted = std::move(on_train.labels);
        r.test_predicted = std::move(on_test.labels);
        r.train_accuracy = accuracy_percent(r.train_predicted, train.labels);
        r.test_accuracy = accuracy_percent(r.test_predicted, test.labels);
    } catch (const Error& e) {
        r.failed = true;
        r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

struct ResultRow {
    std::string dataset;
    std::string algorithm;
    std::string statistic; ///< "average", "best", "single" or "failed"
    std::vector<std::uint64_t> seeds;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::optional<double> train_std;
    std::optional<double> test_std;
};

namespace detail {

inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        out += (i ? ";" : "") + std::to_string(seeds[i]);
    }
    return out;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + p.string());
    }
    return out;
}

} // namespace detail

/// Collapses the runs of one algorithm into table rows: a single row for a
/// single run, "average" (mean ± sample std) and "best" (highest test
/// accuracy, earliest seed on ties) for several.
inline std::vector<ResultRow> summarize(const std::string& dataset, const std::string& algorithm,
                                        const std::vector<RunOutcome>& runs) {
    std::vector<ResultRow> rows;
    std::vector<std::uint64_t> seeds;
    for (const auto& r : runs) {
        seeds.push_back(r.seed);
    }
    const bool any_failed =
        std::any_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.failed; });
    if (runs.empty() || any_failed) {
        rows.push_back({dataset, algorithm, "failed", seeds, 0.0, 0.0, std::nullopt, std::nullopt});
        return rows;
    }
    if (runs.size() == 1) {
        rows.push_back({dataset, algorithm, "single", seeds, runs[0].train_accuracy,
                        runs[0].test_accuracy, std::nullopt, std::nullopt});
        return rows;
    }
    std::vector<double> train;
    std::vector<double> test;
    for (const auto& r : runs) {
        train.push_back(r.train_accuracy);
        test.push_back(r.test_accuracy);
    }
    const auto n = static_cast<double>(runs.size());
    rows.push_back({dataset, algorithm, "average", seeds,
                    std::accumulate(train.begin(), train.end(), 0.0) / n,
                    std::accumulate(test.begin(), test.end(), 0.0) / n, detail::sample_std(train),
                    detail::sample_std(test)});
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].test_accuracy > runs[best].test_accuracy) {
            best = i;
        }
    }
    rows.push_back({dataset, algorithm, "best", {runs[best].seed}, runs[best].train_accuracy,
                    runs[best].test_accuracy, std::nullopt, std::nullopt});
    return rows;
}

inline void write_results_csv(const std::filesystem::path& path,
                              const std::vector<ResultRow>& rows) {
    auto out = detail::open_out(path);
    out << "dataset,algorithm,statistic,seeds,train_accuracy,train_std,test_accuracy,test_std\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.algorithm << ',' << r.statistic << ','
            << detail::join_seeds(r.seeds) << ',';
        if (r.statistic == "failed") {
            out << ",,,\n";
            continue;
        }
        out << detail::fmt("%.4f", r.train_accuracy) << ','
            << (r.train_std ? detail::fmt("%.4f", *r.train_std) : "") << ','
            << detail::fmt("%.4f", r.test_accuracy) << ','
            << (r.test_std ? detail::fmt("%.4f", *r.test_std) : "") << '\n';
    }
}

inline std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            f.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        if (f.size() != 8) {
            throw DataError(path.string() + ": malformed row '" + line + "'");
        }
        ResultRow r;
        r.dataset = f[0];
        r.algorithm = f[1];
        r.statistic = f[2];
        std::size_t pos = 0;
        while (pos < f[3].size()) {
            const auto semi = f[3].find(';', pos);
            r.seeds.push_back(std::stoull(f[3].substr(pos, semi - pos)));
            if (semi == std::string::npos) {
                break;
            }
            pos = semi + 1;
        }
        if (r.statistic != "failed") {
            r.train_accuracy = std::stod(f[4]);
            r.test_accuracy = std::stod(f[6]);
            if (!f[5].empty()) {
                r.train_std = std::stod(f[5]);
            }
            if (!f[7].empty()) {
                r.test_std = std::stod(f[7]);
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Markdown table with the columns Data | Algorithm | # | Training accuracy | Test accuracy.
inline void write_results_markdown(const std::filesystem::path& path,
                                   const std::vector<ResultRow>& rows) {
    auto out = detail::open_out(path);
    out << "| Data | Algorithm | # | Training accuracy | Test accuracy |\n";
    out << "|------|-----------|---|-------------------|---------------|\n";
    std::string last_dataset;
    std::string last_algorithm;
    for (const auto& r : rows) {
        const std::string data = r.dataset == last_dataset ? "" : r.dataset;
        const std::string algo = r.algorithm == last_algorithm ? "" : r.algorithm;
        last_dataset = r.dataset;
        last_algorithm = r.algorithm;
        auto cell = [](double v, const std::optional<double>& sd) {
            std::string s = detail::fmt("%.2f", v);
            if (sd) {
                s += "(±" + detail::fmt("%.2f", *sd) + ")";
            }
            return s;
        };
        std::string stat = r.statistic == "single" ? "-" : r.statistic;
        if (r.statistic == "failed") {
            out << "| " << data << " | " << algo << " | failed | - | - |\n";
            continue;
        }
        out << "| " << data << " | " << algo << " | " << stat << " | "
            << cell(r.train_accuracy, r.train_std) << " | " << cell(r.test_accuracy, r.test_std)
            << " |\n";
    }
}

inline std::filesystem::path predictions_path(const std::filesystem::path& dir,
                                              const std::string& algorithm, std::uint64_t seed) {
    return dir / ("predictions_" + file_tag(algorithm) + "_" + std::to_string(seed) + ".csv");
}

inline void write_predictions(const std::filesystem::path& path, const Dataset& train,
                              const Dataset& test, const RunOutcome& r) {
    auto out = detail::open_out(path);
    out << "split,index,label,predicted\n";
    for (std::size_t i = 0; i < r.train_predicted.size(); ++i) {
        out << "train," << i << ',' << train.labels[i] << ',' << r.train_predicted[i] << '\n';
    }
    for (std::size_t i = 0; i < r.test_predicted.size(); ++i) {
        out << "test," << i << ',' << test.labels[i] << ',' << r.test_predicted[i] << '\n';
    }
}

/// Train/test accuracy recomputed from a predictions dump.
inline std::pair<double, double> accuracy_from_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    std::size_t total[2] = {0, 0};
    std::size_t correct[2] = {0, 0};
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string split;
        std::string index;
        std::string label;
        std::string predicted;
        if (!std::getline(ss, split, ',') || !std::getline(ss, index, ',') ||
            !std::getline(ss, label, ',') || !std::getline(ss, predicted)) {
            throw DataError(path.string() + ": malformed row '" + line + "'");
        }
        const int side = split == "train" ? 0 : 1;
        ++total[side];
        correct[side] += label == predicted ? 1 : 0;
    }
    auto pct = [](std::size_t c, std::size_t t) {
        return t == 0 ? 0.0 : 100.0 * static_cast<double>(c) / static_cast<double>(t);
    };
    return {pct(correct[0], total[0]), pct(correct[1], total[1])};
}

struct ClassificationReport {
    std::vector<ResultRow> rows;
    std::vector<RunOutcome> runs;
    bool partial_failure = false;
};

namespace detail {

inline nlohmann::json manifest(const ExperimentConfig& cfg, const Splits& data,
                               const std::vector<RunOutcome>& runs) {
    nlohmann::json j;
    j["config"] = cfg.source.string();
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", cfg.hash());
    j["config_crc32"] = crc;
    j["version"] = DDAE_VERSION;
    j["compiler"] = __VERSION__;
    j["seeds"] = cfg.seeds;
    j["dataset"] = {{"name", cfg.dataset.name},
                    {"train_size", data.train.size()},
                    {"test_size", data.test.size()},
                    {"dim", data.train.dim()},
                    {"num_classes", data.train.num_classes}};
    j["runs"] = nlohmann::json::array();
    for (const auto& r : runs) {
        nlohmann::json e{{"algorithm", r.algorithm},
                         {"seed", r.seed},
                         {"status", r.failed ? "failed" : "ok"},
                         {"seconds", r.seconds}};
        if (r.failed) {
            e["error"] = r.error;
        } else {
            e["train_accuracy"] = r.train_accuracy;
            e["test_accuracy"] = r.test_accuracy;
        }
        if (r.gamma) {
            e["gamma"] = *r.gamma;
        }
        if (r.C) {
            e["C"] = *r.C;
        }
        j["runs"].push_back(std::move(e));
    }
    return j;
}

} // namespace detail

inline std::filesystem::path model_path(const std::filesystem::path& dir,
                                        const std::string& algorithm, std::uint64_t seed) {
    return dir / ("model_" + file_tag(algorithm) + "_" + std::to_string(seed) + ".ddae");
}

/// Runs every configured algorithm over its seeds and writes results.csv,
/// results.md, predictions_<algo>_<seed>.csv, surface_<algo>.csv (for
/// grid-searched heads) and report.json into `out_dir`. Rows are ordered by
/// algorithm name, then seed. With `save_models`, stacked models are also
/// written as model_<algo>_<seed>.ddae.
inline ClassificationReport run_classification(const ExperimentConfig& cfg,
                                               const std::filesystem::path& out_dir,
                                               bool save_models = false) {
    std::filesystem::create_directories(out_dir);
    ClassificationReport report;
    std::vector<std::string> algorithms = cfg.algorithms;
    std::sort(algorithms.begin(), algorithms.end());
    algorithms.erase(std::unique(algorithms.begin(), algorithms.end()), algorithms.end());

    if (!algorithms.empty()) {
        const Splits data = load_splits(cfg);
        for (const auto& algorithm : algorithms) {
            std::vector<RunOutcome> runs;
            for (auto seed : run_seeds(cfg, algorithm)) {
                std::optional<std::filesystem::path> mp;
                if (save_models && is_stack(algorithm)) {
                    mp = model_path(out_dir, algorithm, seed);
                }
                RunOutcome r = run_one(cfg, data, algorithm, seed, mp);
                if (!r.failed) {
                    write_predictions(predictions_path(out_dir, algorithm, seed), data.train,
                                      data.test, r);
                    if (r.grid && runs.empty()) {
                        write_surface_csv((out_dir / ("surface_" + file_tag(algorithm) + ".csv"))
                                              .string(),
                                          *r.grid);
                    }
                }
                report.partial_failure = report.partial_failure || r.failed;
                r.grid.reset();
                runs.push_back(std::move(r));
            }
            for (auto& row : summarize(cfg.dataset.name, algorithm, runs)) {
                report.rows.push_back(std::move(row));
            }
            for (auto& r : runs) {
                report.runs.push_back(std::move(r));
            }
        }
        auto out = detail::open_out(out_dir / "report.json");
        out << detail::manifest(cfg, data, report.runs).dump(2) << '\n';
    } else {
        auto out = detail::open_out(out_dir / "report.json");
        out << nlohmann::json{{"config", cfg.source.string()}, {"runs", nlohmann::json::array()}}
                   .dump(2)
            << '\n';
    }
    write_results_csv(out_dir / "results.csv", report.rows);
    write_results_markdown(out_dir / "results.md", report.rows);
    return report;
}

struct ReportCheck {
    std::vector<ResultRow> rows;
    std::vector<std::string> mismatches;
};

/// Recomputes every accuracy in results.csv from the predictions dumps next
/// to it and rewrites results.md. Mismatches are listed, not thrown.
inline ReportCheck rebuild_report(const std::filesystem::path& out_dir) {
    ReportCheck check;
    check.rows = read_results_csv(out_dir / "results.csv");
    for (const auto& row : check.rows) {
        if (row.statistic == "failed") {
            continue;
        }
        std::vector<RunOutcome> runs;
        for (auto seed : row.seeds) {
            RunOutcome r;
            r.seed = seed;
            std::tie(r.train_accuracy, r.test_accuracy) =
                accuracy_from_predictions(predictions_path(out_dir, row.algorithm, seed));
            runs.push_back(r);
        }
        std::vector<ResultRow> recomputed = summarize(row.dataset, row.algorithm, runs);
        const ResultRow* match = nullptr;
        for (const auto& r : recomputed) {
            if (r.statistic == row.statistic || (row.statistic == "best" && r.statistic == "single")) {
                match = &r;
            }
        }
        auto same = [](double a, double b) {
            return detail::fmt("%.4f", a) == detail::fmt("%.4f", b);
        };
        if (match == nullptr || !same(match->train_accuracy, row.train_accuracy) ||
            !same(match->test_accuracy, row.test_accuracy)) {
            check.mismatches.push_back(row.algorithm + " " + row.statistic +
                                       ": accuracy does not match the predictions dump");
        }
    }
    write_results_markdown(out_dir / "results.md", check.rows);
    return check;
}

/// Mean of consecutive non-overlapping windows of the trace (a trailing
/// partial window is dropped unless it is the only one).
inline std::vector<double> window_means(const std::vector<double>& trace, std::size_t window) {
    window = std::max<std::size_t>(window, 1);
    std::vector<double> out;
    for (std::size_t start = 0; start + window <= trace.size(); start += window) {
        out.push_back(std::accumulate(trace.begin() + static_cast<std::ptrdiff_t>(start),
                                      trace.begin() + static_cast<std::ptrdiff_t>(start + window),
                                      0.0) /
                      static_cast<double>(window));
    }
    if (out.empty() && !trace.empty()) {
        out.push_back(std::accumulate(trace.begin(), trace.end(), 0.0) /
                      static_cast<double>(trace.size()));
    }
    return out;
}

/// Windowed means never increase and the last is strictly below the first.
inline bool smoothed_decreasing(const std::vector<double>& trace, std::size_t window) {
    const auto means = window_means(trace, window);
    if (means.size() < 2) {
        return false;
    }
    for (std::size_t i = 1; i < means.size(); ++i) {
        if (means[i] > means[i - 1]) {
            return false;
        }
    }
    return means.back() < means.front();
}

struct ReconstructionVariant {
    std::string name;
    std::vector<double> trace;
    double mean_test_kl = 0.0;
    bool converged = false;
    GrayImage weights;
    GrayImage reconstruction;
};

inline const std::array<std::string, 4>& reconstruction_variants() {
    static const std::array<std::string, 4> names{"AE", "SAE", "DAE", "DropConnect-AE"};
    return names;
}

/// Trains one autoencoder per regularizer with a shared seed and writes
/// weights_<name>.pgm (one tile per hidden unit, min-max scaled per tile),
/// recon_<name>.pgm (originals and reconstructions of the first test samples,
/// side by side in pairs), trace_<name>.csv and recon_error.csv.
inline std::vector<ReconstructionVariant> run_reconstruction(const ExperimentConfig& cfg,
                                                             const std::filesystem::path& out_dir) {
    Splits data = load_splits(cfg);
    if (!data.train.image_shape) {
        throw ConfigError("reconstruction needs an image shape (set dataset.image_shape)");
    }
    const ReconstructionSpec& rs = cfg.reconstruction;
    if (rs.train_limit > 0 && data.train.size() > rs.train_limit) {
        Rng rng = Rng(cfg.dataset.subsample_seed).derive(3);
        data.train = subsample(data.train, rs.train_limit, rng);
    }
    std::filesystem::create_directories(out_dir);
    const ImageShape shape = *data.train.image_shape;

    const std::size_t shown = std::min(rs.samples, data.test.size());
    Matrix originals = data.test.samples.topRows(static_cast<Eigen::Index>(shown));

    std::vector<ReconstructionVariant> out;
    auto errors = detail::open_out(out_dir / "recon_error.csv");
    errors << "algorithm,mean_test_kl,final_train_loss,converged\n";
    for (const auto& name : reconstruction_variants()) {
        AEConfig c;
        c.input_dim = data.train.dim();
        c.hidden_dim = rs.layer.hidden;
        c.learning_rate = rs.layer.learning_rate;
        c.epochs = rs.layer.epochs;
        c.batch_size = rs.layer.batch_size;
        c.lr_decay = rs.layer.lr_decay;
        c.activation = cfg.activation;
        c.seed = cfg.seeds.front();
        if (name == "SAE") {
            c.regularizer = cfg.sparse;
        } else if (name == "DAE") {
            c.regularizer = cfg.denoise;
        } else if (name == "DropConnect-AE") {
            c.regularizer = cfg.dropconnect;
        }
        TrainResult trained = train(c, data.train.samples);

        ReconstructionVariant v;
        v.name = name;
        v.trace = std::move(trained.loss_trace);
        v.mean_test_kl = kl_loss(data.test.samples, reconstruct(trained.model, data.test.samples)) /
                         static_cast<double>(std::max<std::size_t>(data.test.size(), 1));
        v.converged = smoothed_decreasing(v.trace, rs.smoothing_window);
        v.weights = tile_grid(trained.model.weights, shape, rs.tile_columns, rs.separator,
                              TileScaling::per_tile_minmax);

        const Matrix recon = reconstruct(trained.model, originals);
        Matrix pairs(2 * originals.rows(), originals.cols());
        for (Eigen::Index i = 0; i < originals.rows(); ++i) {
            pairs.row(2 * i) = originals.row(i);
            pairs.row(2 * i + 1) = recon.row(i);
        }
        v.reconstruction =
            tile_grid(pairs, shape, 2 * rs.tile_columns, rs.separator, TileScaling::clamp_unit);

        write_pgm((out_dir / ("weights_" + name + ".pgm")).string(), v.weights);
        write_pgm((out_dir / ("recon_" + name + ".pgm")).string(), v.reconstruction);
        write_loss_trace_csv((out_dir / ("trace_" + name + ".csv")).string(), v.trace);
        errors << name << ',' << detail::fmt("%.10f", v.mean_test_kl) << ','
               << detail::fmt("%.10f", v.trace.empty() ? 0.0 : v.trace.back()) << ','
               << (v.converged ? "yes" : "no") << '\n';
        out.push_back(std::move(v));
    }
    return out;
}

struct GridOutcome {
    std::string algorithm;
    GridSearchResult result;
};

/// KELM grid search for every configured algorithm that has a KELM head:
/// on the raw training rows for KELM, on the stacked features (first seed)
/// for the autoencoder stacks. Writes surface_<algo>.csv and grid_best.csv.
inline std::vector<GridOutcome> run_grid_search(const ExperimentConfig& cfg,
                                                const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const Splits data = load_splits(cfg);
    std::vector<GridOutcome> out;
    for (const auto& algorithm : cfg.algorithms) {
        if (algorithm != "KELM" && !is_stack(algorithm)) {
            continue;
        }
        GridOutcome g{algorithm, {}};
        if (algorithm == "KELM") {
            g.result = kelm_grid_search(data.train.samples, data.train.labels,
                                        data.train.num_classes, cfg.scheme, cfg.grid);
        } else {
            TrainReport report;
            Matrix hidden;
            train_layers(data.train, make_stack_config(cfg, algorithm, cfg.seeds.front()), report,
                         hidden);
            g.result = kelm_grid_search(hidden, data.train.labels, data.train.num_classes,
                                        cfg.scheme, cfg.grid);
        }
        write_surface_csv((out_dir / ("surface_" + file_tag(algorithm) + ".csv")).string(),
                          g.result);
        out.push_back(std::move(g));
    }
    auto best = detail::open_out(out_dir / "grid_best.csv");
    best << "algorithm,gamma,C,validation_accuracy\n";
    for (const auto& g : out) {
        best << g.algorithm << ',' << detail::fmt("%.17g", g.result.gamma) << ','
             << detail::fmt("%.17g", g.result.C) << ','
             << detail::fmt("%.4f", g.result.validation_accuracy) << '\n';
    }
    return out;
}

} // namespace ddae::experiments
