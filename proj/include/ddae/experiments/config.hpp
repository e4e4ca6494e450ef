#pragma once

// Experiment configuration: a versioned JSON document. Relative paths are
// resolved against the directory holding the config file. The schema is
// documented in docs/config.md.

#include <ddae/autoencoder.hpp>
#include <ddae/checksum.hpp>
#include <ddae/dataset.hpp>
#include <ddae/error.hpp>
#include <ddae/grid_search.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ddae::experiments {

inline constexpr int kConfigSchemaVersion = 1;

/// Algorithms in report order.
inline const std::array<std::string, 7>& known_algorithms() {
    static const std::array<std::string, 7> names{"ELM",      "RELM",     "KELM", "AE+KELM",
                                                  "SAE+KELM", "DAE+KELM", "DDAE"};
    return names;
}

inline std::size_t algorithm_rank(const std::string& name) {
    const auto& names = known_algorithms();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw ConfigError("unknown algorithm '" + name + "'");
    }
    return static_cast<std::size_t>(it - names.begin());
}

inline bool is_stack(const std::string& name) { return algorithm_rank(name) >= 3; }

/// File-name form of an algorithm name ("AE+KELM" -> "AE_KELM").
inline std::string file_tag(std::string name) {
    std::replace(name.begin(), name.end(), '+', '_');
    return name;
}

struct DatasetSpec {
    std::string name = "data";
    std::string format; ///< "idx" or "sparse_text"
    std::filesystem::path train_images, train_labels, test_images, test_labels; // idx
    std::filesystem::path train_path, test_path;                                // sparse_text
    std::size_t dim = 0;
    int label_base = 0;
    std::optional<ImageShape> image_shape;
    std::size_t train_subsample = 0; ///< 0: whole split
    std::size_t test_subsample = 0;
    std::uint64_t subsample_seed = 0;
};

struct LayerSpec {
    std::size_t hidden = 100;
    double learning_rate = 0.1;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double lr_decay = 1.0;
};

struct ReconstructionSpec {
    LayerSpec layer{100, 0.1, 30, 20, 1.0};
    std::size_t train_limit = 10000;
    std::size_t samples = 100;
    std::size_t tile_columns = 10;
    std::size_t separator = 0;
    std::size_t smoothing_window = 5;
};

struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::filesystem::path source;
    std::string raw_text;

    DatasetSpec dataset;
    std::vector<std::string> algorithms;
    std::vector<std::uint64_t> seeds{1};
    LabelScheme scheme = LabelScheme::plus_minus_one;

    std::size_t elm_hidden = 1000;
    std::size_t elm_restarts = 20;
    std::size_t relm_hidden = 1000;
    double relm_C = 1.0;

    GridSpec grid;
    std::optional<std::pair<double, double>> kelm_fixed;

    std::array<LayerSpec, 2> layers{LayerSpec{200, 0.1, 10, 32, 1.0},
                                    LayerSpec{100, 0.1, 10, 32, 1.0}};
    Activation activation = Activation::sigmoid;
    DropConnectRegularizer dropconnect;
    SparseRegularizer sparse;
    DenoiseRegularizer denoise;
    bool scale_by_keep_prob = false;

    ReconstructionSpec reconstruction;

    std::uint32_t hash() const { return crc32_bytes({reinterpret_cast<const std::uint8_t*>(raw_text.data()), raw_text.size()}); }
};

namespace detail {

using nlohmann::json;

inline std::vector<double> parse_grid(const json& j, const char* what) {
    if (j.is_array()) {
        return j.get<std::vector<double>>();
    }
    if (j.is_object() && j.contains("pow2")) {
        const auto range = j.at("pow2").get<std::vector<int>>();
        if (range.size() != 2 || range[0] > range[1]) {
            throw ConfigError(std::string(what) + ": pow2 needs [lo, hi] with lo <= hi");
        }
        return power_of_two_grid(range[0], range[1]);
    }
    throw ConfigError(std::string(what) + ": expected a list or {\"pow2\": [lo, hi]}");
}

inline LayerSpec parse_layer(const json& j, LayerSpec out) {
    out.hidden = j.value("hidden", out.hidden);
    out.learning_rate = j.value("learning_rate", out.learning_rate);
    out.epochs = j.value("epochs", out.epochs);
    out.batch_size = j.value("batch_size", out.batch_size);
    out.lr_decay = j.value("lr_decay", out.lr_decay);
    return out;
}

} // namespace detail

/// Parses a config document. `base_dir` anchors relative paths.
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::filesystem::path& base_dir) {
    using detail::json;
    ExperimentConfig cfg;
    cfg.raw_text = text;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        cfg.schema_version = j.value("schema_version", 0);
        if (cfg.schema_version != kConfigSchemaVersion) {
            throw ConfigError("config schema_version " + std::to_string(cfg.schema_version) +
                              " is not supported (expected " +
                              std::to_string(kConfigSchemaVersion) + ")");
        }
        auto resolve = [&](const json& obj, const char* key) -> std::filesystem::path {
            if (!obj.contains(key)) {
                return {};
            }
            std::filesystem::path p = obj.at(key).get<std::string>();
            return p.is_absolute() ? p : base_dir / p;
        };

        const json& d = j.at("dataset");
        DatasetSpec& ds = cfg.dataset;
        ds.name = d.value("name", ds.name);
        ds.format = d.at("format").get<std::string>();
        if (ds.format == "idx") {
            ds.train_images = resolve(d, "train_images");
            ds.train_labels = resolve(d, "train_labels");
            ds.test_images = resolve(d, "test_images");
            ds.test_labels = resolve(d, "test_labels");
        } else if (ds.format == "sparse_text") {
            ds.train_path = resolve(d, "train");
            ds.test_path = resolve(d, "test");
            ds.dim = d.at("dim").get<std::size_t>();
            ds.label_base = d.value("label_base", 0);
        } else {
            throw ConfigError("dataset.format must be \"idx\" or \"sparse_text\"");
        }
        if (d.contains("image_shape")) {
            const auto s = d.at("image_shape").get<std::vector<std::size_t>>();
            if (s.size() != 2) {
                throw ConfigError("dataset.image_shape must be [height, width]");
            }
            ds.image_shape = ImageShape{s[0], s[1]};
        }
        if (d.contains("subsample")) {
            const json& s = d.at("subsample");
            ds.train_subsample = s.value("train", std::size_t{0});
            ds.test_subsample = s.value("test", std::size_t{0});
            ds.subsample_seed = s.value("seed", std::uint64_t{0});
        }

        cfg.algorithms = j.value("algorithms", std::vector<std::string>{});
        for (const auto& a : cfg.algorithms) {
            algorithm_rank(a);
        }
        cfg.seeds = j.value("seeds", cfg.seeds);
        const std::string scheme = j.value("label_scheme", std::string("plus_minus_one"));
        if (scheme == "plus_minus_one") {
            cfg.scheme = LabelScheme::plus_minus_one;
        } else if (scheme == "zero_one") {
            cfg.scheme = LabelScheme::zero_one;
        } else {
            throw ConfigError("label_scheme must be \"plus_minus_one\" or \"zero_one\"");
        }

        if (j.contains("elm")) {
            cfg.elm_hidden = j["elm"].value("hidden", cfg.elm_hidden);
            cfg.elm_restarts = j["elm"].value("restarts", cfg.elm_restarts);
        }
        if (j.contains("relm")) {
            cfg.relm_hidden = j["relm"].value("hidden", cfg.relm_hidden);
            cfg.relm_C = j["relm"].value("C", cfg.relm_C);
        }
        if (j.contains("kelm")) {
            const json& k = j.at("kelm");
            if (k.contains("gamma")) {
                cfg.grid.gammas = detail::parse_grid(k.at("gamma"), "kelm.gamma");
            }
            if (k.contains("C")) {
                cfg.grid.Cs = detail::parse_grid(k.at("C"), "kelm.C");
            }
            cfg.grid.validation_fraction =
                k.value("validation_fraction", cfg.grid.validation_fraction);
            cfg.grid.split_seed = k.value("split_seed", cfg.grid.split_seed);
            if (k.contains("fixed")) {
                const auto f = k.at("fixed").get<std::vector<double>>();
                if (f.size() != 2) {
                    throw ConfigError("kelm.fixed must be [gamma, C]");
                }
                cfg.kelm_fixed = std::make_pair(f[0], f[1]);
            }
        }
        if (j.contains("autoencoder")) {
            const json& a = j.at("autoencoder");
            if (a.contains("layers")) {
                const json& layers = a.at("layers");
                if (!layers.is_array() || layers.size() != 2) {
                    throw ConfigError("autoencoder.layers must list exactly two layers");
                }
                cfg.layers[0] = detail::parse_layer(layers[0], cfg.layers[0]);
                cfg.layers[1] = detail::parse_layer(layers[1], cfg.layers[1]);
            }
            const std::string act = a.value("activation", std::string("sigmoid"));
            if (act == "sigmoid") {
                cfg.activation = Activation::sigmoid;
            } else if (act == "tanh") {
                cfg.activation = Activation::tanh;
            } else {
                throw ConfigError("autoencoder.activation must be \"sigmoid\" or \"tanh\"");
            }
            if (a.contains("dropconnect")) {
                cfg.dropconnect.drop_fraction =
                    a["dropconnect"].value("drop_fraction", cfg.dropconnect.drop_fraction);
            }
            if (a.contains("sparse")) {
                cfg.sparse.target = a["sparse"].value("target", cfg.sparse.target);
                cfg.sparse.weight = a["sparse"].value("weight", cfg.sparse.weight);
            }
            if (a.contains("denoise")) {
                cfg.denoise.corrupt_fraction =
                    a["denoise"].value("corrupt_fraction", cfg.denoise.corrupt_fraction);
            }
            cfg.scale_by_keep_prob = a.value("scale_by_keep_prob", cfg.scale_by_keep_prob);
        }
        if (j.contains("reconstruction")) {
            const json& r = j.at("reconstruction");
            ReconstructionSpec& rs = cfg.reconstruction;
            rs.layer = detail::parse_layer(r, rs.layer);
            rs.train_limit = r.value("train_limit", rs.train_limit);
            rs.samples = r.value("samples", rs.samples);
            rs.tile_columns = r.value("tile_columns", rs.tile_columns);
            rs.separator = r.value("separator", rs.separator);
            rs.smoothing_window = r.value("smoothing_window", rs.smoothing_window);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

/// Checks cross-field invariants and that every referenced file exists.
inline void validate(const ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) {
        throw ConfigError("seeds must list at least one seed");
    }
    const DatasetSpec& ds = cfg.dataset;
    std::vector<std::filesystem::path> paths;
    if (ds.format == "idx") {
        paths = {ds.train_images, ds.train_labels, ds.test_images, ds.test_labels};
    } else {
        paths = {ds.train_path, ds.test_path};
        if (ds.dim == 0) {
            throw ConfigError("dataset.dim must be positive");
        }
    }
    for (const auto& p : paths) {
        if (p.empty() || !std::filesystem::exists(p)) {
            throw ConfigError("dataset file not found: " + p.string());
        }
    }
    if (cfg.elm_restarts == 0) {
        throw ConfigError("elm.restarts must be positive");
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    ExperimentConfig cfg = parse_config(text.str(), path.parent_path());
    cfg.source = path;
    validate(cfg);
    return cfg;
}

} // namespace ddae::experiments
