#include <ddae/experiments/config.hpp>
#include <ddae/experiments/runs.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ddae::experiments;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// 4x4 digit-like fixture: three blob classes written as IDX bytes.
class Fixture : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               (std::string("ddae_exp_") +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        write_split("train", 30, 1);
        write_split("test", 10, 2);
    }
    void TearDown() override { fs::remove_all(dir_); }

    void write_split(const std::string& name, int per_class, std::uint32_t seed) {
        // Same centres for both splits: the centre draw comes first from seed 77.
        const auto centres = oracle::blobs(1, 3, 16, 0.0, 77);
        std::mt19937 gen(seed);
        std::normal_distribution<double> noise(0.0, 0.08);
        std::vector<std::vector<std::uint8_t>> pixels;
        std::vector<std::uint8_t> labels;
        for (int i = 0; i < per_class * 3; ++i) {
            std::vector<std::uint8_t> p;
            for (int k = 0; k < 16; ++k) {
                const double v = std::clamp(centres.x(i % 3, k) + noise(gen), 0.0, 1.0);
                p.push_back(static_cast<std::uint8_t>(std::lround(v * 255)));
            }
            pixels.push_back(p);
            labels.push_back(static_cast<std::uint8_t>(i % 3));
        }
        oracle::write_idx((dir_ / (name + "-images")).string(), (dir_ / (name + "-labels")).string(),
                          pixels, labels, 4, 4);
    }

    fs::path write_config(const std::string& body) {
        const fs::path p = dir_ / "config.json";
        std::ofstream(p) << R"({
  "schema_version": 1,
  "dataset": {
    "name": "Toy", "format": "idx",
    "train_images": "train-images", "train_labels": "train-labels",
    "test_images": "test-images", "test_labels": "test-labels",
    "image_shape": [4, 4]
  },
  "kelm": {"gamma": {"pow2": [-1, 1]}, "C": [1, 16], "split_seed": 2},
  "autoencoder": {"layers": [{"hidden": 10, "epochs": 10, "batch_size": 10, "learning_rate": 0.5},
                             {"hidden": 8, "epochs": 10, "batch_size": 10, "learning_rate": 0.5}]},
  "elm": {"hidden": 20, "restarts": 3},
  "relm": {"hidden": 20, "C": 8},
  "reconstruction": {"hidden": 9, "epochs": 40, "batch_size": 10, "learning_rate": 0.5,
                     "samples": 6, "tile_columns": 3, "separator": 1, "smoothing_window": 4},
)" << body << "\n}\n";
        return p;
    }

    fs::path dir_;
};

} // namespace

TEST(ConfigParse, DefaultsAndGrids) {
    const auto cfg = parse_config(R"({"schema_version": 1,
        "dataset": {"format": "sparse_text", "train": "a", "test": "b", "dim": 256, "label_base": 1},
        "kelm": {"gamma": {"pow2": [0, 2]}, "C": [0.5, 2]}})",
                                  "/base");
    EXPECT_EQ(cfg.dataset.train_path, fs::path("/base/a"));
    EXPECT_EQ(cfg.dataset.label_base, 1);
    EXPECT_EQ(cfg.grid.gammas, (std::vector<double>{1, 2, 4}));
    EXPECT_EQ(cfg.grid.Cs, (std::vector<double>{0.5, 2}));
    EXPECT_TRUE(cfg.algorithms.empty());
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1}));
    EXPECT_EQ(cfg.elm_restarts, 20u);
}

TEST(ConfigParse, Errors) {
    EXPECT_THROW(parse_config("{", "."), ddae::ConfigError);
    EXPECT_THROW(parse_config(R"({"schema_version": 2, "dataset": {"format": "idx"}})", "."),
                 ddae::ConfigError);
    EXPECT_THROW(parse_config(R"({"schema_version": 1, "dataset": {"format": "csv"}})", "."),
                 ddae::ConfigError);
    EXPECT_THROW(parse_config(R"({"schema_version": 1, "dataset": {"format": "idx"},
                                  "algorithms": ["SVM"]})",
                              "."),
                 ddae::ConfigError);
    EXPECT_THROW(parse_config(R"({"schema_version": 1, "dataset": {"format": "idx"},
                                  "kelm": {"gamma": {"pow2": [3, 1]}}})",
                              "."),
                 ddae::ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ddae::ConfigError);
}

TEST(ConfigParse, AlgorithmTags) {
    EXPECT_EQ(file_tag("AE+KELM"), "AE_KELM");
    EXPECT_TRUE(is_stack("DDAE"));
    EXPECT_FALSE(is_stack("KELM"));
}

// the shipped configs must parse even where their data is absent
TEST(ConfigParse, CommittedConfigsParse) {
    std::size_t seen = 0;
    for (const auto& e : std::filesystem::directory_iterator(DDAE_CONFIG_DIR)) {
        if (e.path().extension() != ".json") {
            continue;
        }
        std::ifstream in(e.path());
        std::ostringstream text;
        text << in.rdbuf();
        ExperimentConfig cfg;
        ASSERT_NO_THROW(cfg = parse_config(text.str(), e.path().parent_path()))
            << e.path().filename();
        for (const auto& a : cfg.algorithms) {
            EXPECT_NO_THROW(algorithm_rank(a)) << a;
        }
        if (!cfg.algorithms.empty() && cfg.dataset.name == "MNIST") {
            EXPECT_EQ(cfg.layers[0].hidden, 500u);
            EXPECT_EQ(cfg.layers[1].hidden, 200u);
        } else if (!cfg.algorithms.empty() && cfg.dataset.name == "USPS") {
            EXPECT_EQ(cfg.layers[0].hidden, 200u);
            EXPECT_EQ(cfg.layers[1].hidden, 100u);
        }
        ++seen;
    }
    EXPECT_EQ(seen, 4u);
}

TEST(Summaries, AverageAndBest) {
    std::vector<RunOutcome> runs(3);
    const double train[] = {90.0, 92.0, 94.0};
    const double test[] = {80.0, 85.0, 85.0};
    for (int i = 0; i < 3; ++i) {
        runs[static_cast<std::size_t>(i)].seed = static_cast<std::uint64_t>(i + 1);
        runs[static_cast<std::size_t>(i)].train_accuracy = train[i];
        runs[static_cast<std::size_t>(i)].test_accuracy = test[i];
    }
    const auto rows = summarize("D", "ELM", runs);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].statistic, "average");
    EXPECT_DOUBLE_EQ(rows[0].train_accuracy, 92.0);
    EXPECT_DOUBLE_EQ(*rows[0].train_std, 2.0);
    EXPECT_DOUBLE_EQ(rows[0].test_accuracy, 250.0 / 3.0);
    EXPECT_EQ(rows[1].statistic, "best");
    EXPECT_EQ(rows[1].seeds, (std::vector<std::uint64_t>{2}));
    EXPECT_FALSE(rows[1].test_std);

    const auto single = summarize("D", "KELM", {runs[0]});
    ASSERT_EQ(single.size(), 1u);
    EXPECT_EQ(single[0].statistic, "single");
    EXPECT_FALSE(single[0].train_std);

    runs[1].failed = true;
    EXPECT_EQ(summarize("D", "ELM", runs)[0].statistic, "failed");
}

TEST(Summaries, SmoothedDecrease) {
    EXPECT_TRUE(smoothed_decreasing({5, 4, 4.5, 3, 2.5, 2.8, 2, 1.9}, 2));
    EXPECT_FALSE(smoothed_decreasing({5, 4, 4.5, 6, 2.5, 2.8}, 2));
    EXPECT_FALSE(smoothed_decreasing({1.0}, 2));
    EXPECT_EQ(window_means({1, 2, 3, 4, 5}, 2), (std::vector<double>{1.5, 3.5}));
}

TEST_F(Fixture, EmptyAlgorithmListGivesEmptyReport) {
    const auto cfg = load_config(write_config(R"("algorithms": [])"));
    const auto report = run_classification(cfg, dir_ / "out");
    EXPECT_TRUE(report.rows.empty());
    EXPECT_FALSE(report.partial_failure);
    EXPECT_EQ(slurp(dir_ / "out" / "results.csv"),
              "dataset,algorithm,statistic,seeds,train_accuracy,train_std,test_accuracy,test_std\n");
    EXPECT_TRUE(fs::exists(dir_ / "out" / "results.md"));
}

TEST_F(Fixture, ClassificationIsDeterministicAndReportChecks) {
    const auto cfg = load_config(write_config(
        R"("algorithms": ["DDAE", "KELM", "ELM", "AE+KELM"], "seeds": [3])"));
    const auto a = run_classification(cfg, dir_ / "a");
    const auto b = run_classification(cfg, dir_ / "b");
    EXPECT_FALSE(a.partial_failure);
    for (const char* f : {"results.csv", "results.md", "predictions_DDAE_3.csv",
                          "predictions_KELM_3.csv", "surface_KELM.csv", "surface_DDAE.csv",
                          "predictions_ELM_5.csv"}) {
        ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    }
    // Rows sorted by algorithm name; ELM restarts give average and best.
    std::vector<std::string> order;
    for (const auto& r : a.rows) {
        order.push_back(r.algorithm + "/" + r.statistic);
    }
    EXPECT_EQ(order, (std::vector<std::string>{"AE+KELM/single", "DDAE/single", "ELM/average",
                                               "ELM/best", "KELM/single"}));
    for (const auto& r : a.rows) {
        EXPECT_GE(r.test_accuracy, 0.0);
        EXPECT_LE(r.test_accuracy, 100.0);
    }
    const auto md = slurp(dir_ / "a" / "results.md");
    EXPECT_EQ(md.rfind("| Data | Algorithm | # | Training accuracy | Test accuracy |", 0), 0u);
    EXPECT_NE(md.find("(±"), std::string::npos);

    const auto check = rebuild_report(dir_ / "a");
    EXPECT_TRUE(check.mismatches.empty());
    // Tampering with a prediction dump is detected.
    {
        const auto path = dir_ / "a" / "predictions_KELM_3.csv";
        std::string text = slurp(path);
        const auto pos = text.find("test,0,");
        ASSERT_NE(pos, std::string::npos);
        const auto end = text.find('\n', pos);
        const char label = text[end - 1];
        text[end - 1] = label == '0' ? '1' : '0';
        std::ofstream(path, std::ios::binary) << text;
    }
    EXPECT_EQ(rebuild_report(dir_ / "a").mismatches.size(), 1u);
}

TEST_F(Fixture, ModelFailureGivesFailedRowAndOtherModelsContinue) {
    auto cfg = load_config(write_config(R"("algorithms": ["DDAE", "KELM"])"));
    cfg.layers[0].batch_size = 1000;
    const auto report = run_classification(cfg, dir_ / "out");
    EXPECT_TRUE(report.partial_failure);
    ASSERT_EQ(report.rows.size(), 2u);
    EXPECT_EQ(report.rows[0].statistic, "failed");
    EXPECT_EQ(report.rows[1].algorithm, "KELM");
    EXPECT_NE(report.rows[1].statistic, "failed");
    EXPECT_NE(slurp(dir_ / "out" / "report.json").find("stage 1"), std::string::npos);
}

TEST_F(Fixture, ReconstructionImages) {
    const auto cfg = load_config(write_config(R"("seeds": [4])"));
    const auto variants = run_reconstruction(cfg, dir_ / "out");
    ASSERT_EQ(variants.size(), 4u);
    for (const auto& v : variants) {
        EXPECT_EQ(v.trace.size(), 40u);
        const auto w = ddae::read_pgm((dir_ / "out" / ("weights_" + v.name + ".pgm")).string());
        EXPECT_EQ(w.width, 3 * 4 + 2u);
        EXPECT_EQ(w.height, 3 * 4 + 2u);
        const auto r = ddae::read_pgm((dir_ / "out" / ("recon_" + v.name + ".pgm")).string());
        EXPECT_EQ(r.width, 6 * 4 + 5u);
        EXPECT_EQ(r.height, 2 * 4 + 1u);
        EXPECT_TRUE(fs::exists(dir_ / "out" / ("trace_" + v.name + ".csv")));
    }
    const auto csv = slurp(dir_ / "out" / "recon_error.csv");
    EXPECT_EQ(csv.rfind("algorithm,mean_test_kl,final_train_loss,converged\n", 0), 0u);
}

TEST_F(Fixture, ReconstructionNeedsImageShape) {
    std::ofstream(dir_ / "flat.txt") << "0 1:0.5\n1 2:0.5\n0 3:0.5\n1 4:0.5\n";
    const fs::path p = dir_ / "flat.json";
    std::ofstream(p) << R"({"schema_version": 1, "dataset": {"format": "sparse_text", "dim": 16,
                            "train": "flat.txt", "test": "flat.txt"}})";
    EXPECT_THROW(run_reconstruction(load_config(p), dir_ / "out"), ddae::ConfigError);
}

TEST_F(Fixture, GridSearchWritesSurfaces) {
    const auto cfg = load_config(write_config(R"("algorithms": ["KELM", "DDAE", "ELM"])"));
    const auto out = run_grid_search(cfg, dir_ / "out");
    ASSERT_EQ(out.size(), 2u);
    for (const char* tag : {"KELM", "DDAE"}) {
        std::ifstream in(dir_ / "out" / (std::string("surface_") + tag + ".csv"));
        std::string line;
        int rows = -1;
        while (std::getline(in, line)) {
            ++rows;
        }
        EXPECT_EQ(rows, 3 * 2) << tag;
    }
    EXPECT_TRUE(fs::exists(dir_ / "out" / "grid_best.csv"));
}

TEST_F(Fixture, CliExitCodes) {
    const std::string cli = DDAE_CLI_PATH;
    auto run = [&](const std::string& args) {
        const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    const auto good = write_config(R"("algorithms": ["KELM"])");
    const auto out = (dir_ / "cli").string();
    EXPECT_EQ(run("train --config " + good.string() + " --out-dir " + out), 0);
    EXPECT_EQ(run("report --out-dir " + out), 0);
    EXPECT_EQ(run("train --config /nonexistent.json --out-dir " + out), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("train --config " + good.string() + " --algorithm SVM --out-dir " + out), 1);

    // Garbage image file: the loader rejects it, exit code 2.
    std::ofstream(dir_ / "test-images", std::ios::binary) << "garbage";
    EXPECT_EQ(run("train --config " + good.string() + " --out-dir " + out), 2);

    write_split("test", 10, 2);
    auto failing = write_config(R"("algorithms": ["DDAE", "KELM"])");
    std::string text = slurp(failing);
    text.replace(text.find("\"batch_size\": 10"), 16, "\"batch_size\": 1000");
    std::ofstream(failing) << text;
    EXPECT_EQ(run("train --config " + failing.string() + " --out-dir " + out), 3);

    const auto save = write_config(R"("algorithms": ["DDAE"], "kelm": {"fixed": [1, 16]})");
    EXPECT_EQ(run("train --save-models --config " + save.string() + " --out-dir " + out), 0);
    EXPECT_TRUE(fs::exists(dir_ / "cli" / "model_DDAE_1.ddae"));
    EXPECT_EQ(run("evaluate --config " + save.string() + " --out-dir " + out), 0);
    EXPECT_TRUE(fs::exists(dir_ / "cli" / "evaluation.csv"));
}
