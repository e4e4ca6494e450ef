#pragma once

// The stacked pipeline: autoencoder → autoencoder → KELM head.
//
// Layer accounting for the five-layer model: input, first hidden layer,
// second hidden layer, kernel layer, output. The kernel layer is implicit:
// its feature map is never materialized, the Gram matrix of the second
// hidden layer's outputs stands in for HHᵀ.
//
// DDAE proper is the stack whose first layer uses DropConnect and whose
// second layer is unregularized. The same machinery trains the AE/SAE/DAE
// stacked baselines.

#include <ddae/autoencoder.hpp>
#include <ddae/checksum.hpp>
#include <ddae/dataset.hpp>
#include <ddae/elm.hpp>
#include <ddae/error.hpp>
#include <ddae/grid_search.hpp>
#include <ddae/matrix.hpp>

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ddae {

struct StackConfig {
    AEConfig first;  ///< input_dim is taken from the data
    AEConfig second; ///< input_dim is taken from first.hidden_dim
    GridSpec grid;
    LabelScheme scheme = LabelScheme::plus_minus_one;
    bool scale_by_keep_prob = false;
    /// When set, (gamma, C) for the head and no grid search is run.
    std::optional<std::pair<double, double>> fixed_head;
};

struct DDAEModel {
    AEModel first;
    AEModel second;
    KELMModel head;
    int num_classes = 0;
    LabelScheme scheme = LabelScheme::plus_minus_one;
    bool scale_by_keep_prob = false;
    std::optional<Normalization> preprocessing;
};

struct TrainReport {
    std::vector<double> first_trace;
    std::vector<double> second_trace;
    double gamma = 0.0;
    double C = 0.0;
    std::optional<GridSearchResult> grid;
    double stage_seconds[3] = {0.0, 0.0, 0.0};
    std::uint64_t first_seed = 0;
    std::uint64_t second_seed = 0;
    std::uint64_t split_seed = 0;
    std::uint32_t head_feature_crc = 0; ///< CRC-32 of the matrix the head was fitted on
};

/// Output of the second hidden layer for raw inputs x.
inline Matrix stack_features(const DDAEModel& m, const Matrix& x) {
    return features(m.second, features(m.first, x, m.scale_by_keep_prob));
}

namespace detail {

template <typename F>
auto run_stage(int stage, double& seconds, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
        auto out = body();
        seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
    } catch (const SplitError& e) {
        throw SplitError("stage " + std::to_string(stage) + ": " + e.what());
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e.what());
    }
}

} // namespace detail

/// Fills in the layer input dimensions from the data.
inline StackConfig resolve_dims(StackConfig config, std::size_t input_dim) {
    config.first.input_dim = input_dim;
    config.second.input_dim = config.first.hidden_dim;
    return config;
}

/// Stages 1 and 2: first AE on the raw rows, second AE on the first layer's
/// features. The returned model has no head yet; `hidden` receives the second
/// layer's features of the training rows.
inline DDAEModel train_layers(const Dataset& train, StackConfig config, TrainReport& report,
                              Matrix& hidden) {
    if (train.size() == 0) {
        throw DomainError("cannot train on an empty dataset");
    }
    train.validate();
    config = resolve_dims(std::move(config), train.dim());

    DDAEModel model;
    model.num_classes = train.num_classes;
    model.scheme = config.scheme;
    model.scale_by_keep_prob = config.scale_by_keep_prob;
    model.preprocessing = train.normalization;
    report.first_seed = config.first.seed;
    report.second_seed = config.second.seed;
    report.split_seed = config.grid.split_seed;

    auto first = detail::run_stage(1, report.stage_seconds[0],
                                   [&] { return ddae::train(config.first, train.samples); });
    model.first = std::move(first.model);
    report.first_trace = std::move(first.loss_trace);

    const Matrix hidden1 = features(model.first, train.samples, config.scale_by_keep_prob);
    auto second = detail::run_stage(2, report.stage_seconds[1],
                                    [&] { return ddae::train(config.second, hidden1); });
    model.second = std::move(second.model);
    report.second_trace = std::move(second.loss_trace);

    hidden = features(model.second, hidden1);
    report.head_feature_crc = crc32_matrix(hidden);
    return model;
}

/// Greedy layer-wise training followed by the KELM head, fitted on the second
/// layer's features of the full training set (hyperparameters chosen on a
/// hold-out split of it unless fixed in the config).
inline std::pair<DDAEModel, TrainReport> train_stack(const Dataset& train,
                                                     const StackConfig& config) {
    TrainReport report;
    Matrix hidden2;
    DDAEModel model = train_layers(train, config, report, hidden2);
    model.head = detail::run_stage(3, report.stage_seconds[2], [&] {
        double gamma = 0.0;
        double C = 0.0;
        if (config.fixed_head) {
            std::tie(gamma, C) = *config.fixed_head;
        } else {
            report.grid = kelm_grid_search(hidden2, train.labels, train.num_classes,
                                           config.scheme, config.grid);
            gamma = report.grid->gamma;
            C = report.grid->C;
        }
        report.gamma = gamma;
        report.C = C;
        return kelm_fit(hidden2, one_hot(train.labels, train.num_classes, config.scheme), gamma,
                        C);
    });
    return {std::move(model), std::move(report)};
}

/// DDAE: DropConnect first layer, unregularized second layer.
inline std::pair<DDAEModel, TrainReport> ddae_train(const Dataset& train,
                                                    const StackConfig& config) {
    if (!std::holds_alternative<DropConnectRegularizer>(config.first.regularizer)) {
        throw ConfigError("DDAE requires a DropConnect first layer");
    }
    if (!std::holds_alternative<NoRegularizer>(config.second.regularizer)) {
        throw ConfigError("DDAE requires an unregularized second layer");
    }
    return train_stack(train, config);
}

inline Prediction ddae_predict(const DDAEModel& m, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != m.first.input_dim()) {
        throw ShapeError("ddae_predict: input " + shape_string(x) + " but model expects " +
                         std::to_string(m.first.input_dim()) + " columns");
    }
    return kelm_predict(m.head, stack_features(m, x));
}

} // namespace ddae
