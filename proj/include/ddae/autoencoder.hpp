#pragma once

// Single-layer tied-weight autoencoder trained by plain minibatch SGD on a
// summed Bernoulli KL reconstruction loss.
//
//   encoder   y = act((M ⊙ W) xᵀ + b)     M: DropConnect mask, all ones otherwise
//   decoder   z = sigmoid(Wᵀ y + b')      never masked
//
// Regularizer variants: none (AE), sparsity penalty (SAE), masking-noise input
// corruption (DAE) and DropConnect weight masking. The decoder is always a
// sigmoid because the KL loss needs outputs in (0, 1); the encoder activation
// is configurable.

#include <ddae/error.hpp>
#include <ddae/matrix.hpp>
#include <ddae/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace ddae {

enum class Activation { sigmoid, tanh };

struct NoRegularizer {
    friend bool operator==(const NoRegularizer&, const NoRegularizer&) = default;
};

/// Penalty weight · Σ_j KL(ρ ‖ ρ̂_j), ρ̂_j the batch-mean activation of unit j.
struct SparseRegularizer {
    double target = 0.05;
    double weight = 0.1;
    friend bool operator==(const SparseRegularizer&, const SparseRegularizer&) = default;
};

/// Zeroes a `corrupt_fraction` share of input entries; the loss target stays clean.
struct DenoiseRegularizer {
    double corrupt_fraction = 0.3;
    friend bool operator==(const DenoiseRegularizer&, const DenoiseRegularizer&) = default;
};

/// Zeroes each input-to-hidden weight with probability `drop_fraction`;
/// a fresh mask is drawn for every minibatch.
struct DropConnectRegularizer {
    double drop_fraction = 0.5;
    friend bool operator==(const DropConnectRegularizer&, const DropConnectRegularizer&) = default;
};

using Regularizer =
    std::variant<NoRegularizer, SparseRegularizer, DenoiseRegularizer, DropConnectRegularizer>;

inline std::string regularizer_name(const Regularizer& r) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoRegularizer>) {
                return "none";
            } else if constexpr (std::is_same_v<T, SparseRegularizer>) {
                return "sparse";
            } else if constexpr (std::is_same_v<T, DenoiseRegularizer>) {
                return "denoise";
            } else {
                return "dropconnect";
            }
        },
        r);
}

struct AEConfig {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    double learning_rate = 0.1;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    Regularizer regularizer = NoRegularizer{};
    Activation activation = Activation::sigmoid;
    double lr_decay = 1.0;   ///< multiplicative, applied after each epoch
    double init_scale = 1.0; ///< multiplies the Glorot range; 0 starts from the zero model
    std::uint64_t seed = 1;

    void validate() const {
        if (input_dim == 0 || hidden_dim == 0) {
            throw DomainError("autoencoder dimensions must be positive");
        }
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw DomainError("learning rate must be positive and finite");
        }
        if (batch_size == 0) {
            throw DomainError("batch size must be positive");
        }
        if (!(lr_decay > 0.0) || !std::isfinite(lr_decay)) {
            throw DomainError("learning-rate decay must be positive");
        }
        if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
            throw DomainError("initialization scale must be nonnegative");
        }
        if (const auto* s = std::get_if<SparseRegularizer>(&regularizer)) {
            if (!(s->target > 0.0 && s->target < 1.0) || !(s->weight >= 0.0)) {
                throw DomainError("sparsity target must lie in (0, 1) with weight >= 0");
            }
        }
        if (const auto* d = std::get_if<DenoiseRegularizer>(&regularizer)) {
            if (!(d->corrupt_fraction >= 0.0 && d->corrupt_fraction <= 1.0)) {
                throw DomainError("corruption fraction must lie in [0, 1]");
            }
        }
        if (const auto* d = std::get_if<DropConnectRegularizer>(&regularizer)) {
            if (!(d->drop_fraction >= 0.0 && d->drop_fraction < 1.0)) {
                throw DomainError("drop fraction must lie in [0, 1)");
            }
        }
    }
};

struct AEModel {
    Matrix weights;      ///< hidden_dim x input_dim; the decoder uses its transpose
    Vector encoder_bias; ///< hidden_dim
    Vector decoder_bias; ///< input_dim
    AEConfig config;

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
    std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(weights.rows()); }
};

namespace detail {

// Random streams drawn from the config seed. Keeping masks on their own
// stream means a DropConnect run with drop fraction 0 shuffles exactly like
// an unregularized run.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;
inline constexpr std::uint64_t kNoiseStream = 3;

inline constexpr double kClip = 1e-7;

inline Matrix activate(const Matrix& pre, Activation act) {
    if (act == Activation::tanh) {
        return pre.array().tanh().matrix();
    }
    return sigmoid(pre);
}

inline Matrix activation_slope(const Matrix& out, Activation act) {
    if (act == Activation::tanh) {
        return (1.0 - out.array().square()).matrix();
    }
    return out.cwiseProduct((1.0 - out.array()).matrix());
}

inline void require_columns(const Matrix& x, std::size_t cols, const char* what) {
    if (static_cast<std::size_t>(x.cols()) != cols) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(cols) +
                         " columns, got " + shape_string(x));
    }
}

inline double bernoulli_kl(double p, double q) {
    p = std::clamp(p, kClip, 1.0 - kClip);
    q = std::clamp(q, kClip, 1.0 - kClip);
    return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

} // namespace detail

/// Glorot-uniform weights in ±init_scale·sqrt(6 / (fan_in + fan_out)), zero biases.
inline AEModel initialize(const AEConfig& config) {
    config.validate();
    Rng rng = Rng(config.seed).derive(detail::kInitStream);
    const double r = config.init_scale *
                     std::sqrt(6.0 / static_cast<double>(config.input_dim + config.hidden_dim));
    AEModel m;
    m.weights = uniform_matrix(static_cast<Eigen::Index>(config.hidden_dim),
                               static_cast<Eigen::Index>(config.input_dim), -r, r, rng);
    m.encoder_bias = Vector::Zero(static_cast<Eigen::Index>(config.hidden_dim));
    m.decoder_bias = Vector::Zero(static_cast<Eigen::Index>(config.input_dim));
    m.config = config;
    return m;
}

inline Matrix encode(const AEModel& m, const Matrix& x, const Matrix* mask = nullptr) {
    detail::require_columns(x, m.input_dim(), "encode");
    Matrix pre;
    if (mask != nullptr) {
        pre.noalias() = x * hadamard(*mask, m.weights).transpose();
    } else {
        pre.noalias() = x * m.weights.transpose();
    }
    pre.rowwise() += m.encoder_bias.transpose();
    return detail::activate(pre, m.config.activation);
}

inline Matrix decode(const AEModel& m, const Matrix& y) {
    detail::require_columns(y, m.hidden_dim(), "decode");
    Matrix pre;
    pre.noalias() = y * m.weights;
    pre.rowwise() += m.decoder_bias.transpose();
    return sigmoid(pre);
}

inline Matrix reconstruct(const AEModel& m, const Matrix& x) { return decode(m, encode(m, x)); }

/// Σ over all entries of KL(x ‖ z) for Bernoulli variables, both clipped to
/// [1e-7, 1 - 1e-7].
inline double kl_loss(const Matrix& x, const Matrix& z) {
    if (x.rows() != z.rows() || x.cols() != z.cols()) {
        throw ShapeError("kl_loss: shapes differ, " + shape_string(x) + " vs " + shape_string(z));
    }
    double total = 0.0;
    const double* xs = x.data();
    const double* zs = z.data();
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        total += detail::bernoulli_kl(xs[k], zs[k]);
    }
    return total;
}

/// Optional inputs to a gradient evaluation. A DropConnect step passes the
/// batch mask; a denoising step passes the corrupted batch that the encoder
/// sees (the loss target is always the clean batch).
struct GradientContext {
    const Matrix* mask = nullptr;
    const Matrix* corrupted_input = nullptr;
};

struct Gradients {
    Matrix weights;
    Vector encoder_bias;
    Vector decoder_bias;
    double loss = 0.0; ///< reconstruction KL plus any sparsity penalty
};

/// Exact gradients of the (summed) batch loss. With tied weights the encoder
/// and decoder contributions are added into one weight gradient; the encoder
/// part is masked when a mask is supplied.
inline Gradients loss_gradients(const AEModel& m, const Matrix& x, const GradientContext& ctx = {}) {
    detail::require_columns(x, m.input_dim(), "loss_gradients");
    const Matrix& input = ctx.corrupted_input != nullptr ? *ctx.corrupted_input : x;
    if (input.rows() != x.rows() || input.cols() != x.cols()) {
        throw ShapeError("loss_gradients: corrupted batch " + shape_string(input) +
                         " does not match batch " + shape_string(x));
    }
    if (ctx.mask != nullptr && (ctx.mask->rows() != m.weights.rows() ||
                                ctx.mask->cols() != m.weights.cols())) {
        throw ShapeError("loss_gradients: mask " + shape_string(*ctx.mask) +
                         " does not match weights " + shape_string(m.weights));
    }
    const auto batch = static_cast<double>(x.rows());
    const Activation act = m.config.activation;

    const Matrix y = encode(m, input, ctx.mask);
    const Matrix z = decode(m, y);

    Gradients g;
    g.loss = kl_loss(x, z);

    // dL/d(decoder pre-activation): z - x inside the clip band, 0 where z is clipped.
    Matrix d_out(z.rows(), z.cols());
    {
        const double* xs = x.data();
        const double* zs = z.data();
        double* ds = d_out.data();
        for (Eigen::Index k = 0; k < z.size(); ++k) {
            const double xc = std::clamp(xs[k], detail::kClip, 1.0 - detail::kClip);
            const bool inside = zs[k] >= detail::kClip && zs[k] <= 1.0 - detail::kClip;
            ds[k] = inside ? zs[k] - xc : 0.0;
        }
    }
    g.decoder_bias = d_out.colwise().sum().transpose();
    g.weights.noalias() = y.transpose() * d_out;

    Matrix d_hidden;
    d_hidden.noalias() = d_out * m.weights.transpose();

    if (const auto* sparse = std::get_if<SparseRegularizer>(&m.config.regularizer)) {
        const Eigen::RowVectorXd mean_activation = y.colwise().mean();
        Eigen::RowVectorXd slope(mean_activation.size());
        double penalty = 0.0;
        for (Eigen::Index j = 0; j < mean_activation.size(); ++j) {
            const double rho_hat = mean_activation(j);
            penalty += detail::bernoulli_kl(sparse->target, rho_hat);
            const bool inside = rho_hat >= detail::kClip && rho_hat <= 1.0 - detail::kClip;
            slope(j) = inside ? sparse->weight *
                                    (-sparse->target / rho_hat +
                                     (1.0 - sparse->target) / (1.0 - rho_hat)) /
                                    batch
                              : 0.0;
        }
        g.loss += sparse->weight * penalty;
        d_hidden.rowwise() += slope;
    }

    const Matrix d_pre = d_hidden.cwiseProduct(detail::activation_slope(y, act));
    g.encoder_bias = d_pre.colwise().sum().transpose();
    // Same evaluation order with and without a mask, so an all-ones mask is bit-identical.
    Matrix encoder_part;
    encoder_part.noalias() = d_pre.transpose() * input;
    if (ctx.mask != nullptr) {
        encoder_part.array() *= ctx.mask->array();
    }
    g.weights += encoder_part;

    if (!g.weights.allFinite()) {
        throw NumericError("loss_gradients: non-finite gradient for weights");
    }
    if (!g.encoder_bias.allFinite()) {
        throw NumericError("loss_gradients: non-finite gradient for encoder bias");
    }
    if (!g.decoder_bias.allFinite()) {
        throw NumericError("loss_gradients: non-finite gradient for decoder bias");
    }
    return g;
}

struct TrainResult {
    AEModel model;
    std::vector<double> loss_trace; ///< mean per-sample loss of each epoch
};

/// Minibatch SGD. Each epoch reshuffles the rows; the last batch may be
/// short. Updates use the batch-mean gradient, so the learning rate is
/// independent of the batch size.
inline TrainResult train(const AEConfig& config, const Matrix& x) {
    config.validate();
    detail::require_columns(x, config.input_dim, "train");
    const auto n = static_cast<std::size_t>(x.rows());
    if (config.epochs > 0 && n < config.batch_size) {
        throw DomainError("train: " + std::to_string(n) + " rows is fewer than batch size " +
                          std::to_string(config.batch_size));
    }

    TrainResult result{initialize(config), {}};
    AEModel& m = result.model;
    const Rng root(config.seed);
    Rng order_rng = root.derive(detail::kShuffleStream);
    Rng noise_rng = root.derive(detail::kNoiseStream);

    const auto* dropconnect = std::get_if<DropConnectRegularizer>(&config.regularizer);
    const auto* denoise = std::get_if<DenoiseRegularizer>(&config.regularizer);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double rate = config.learning_rate;
    result.loss_trace.reserve(config.epochs);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t rows = std::min(config.batch_size, n - start);
            Matrix batch(static_cast<Eigen::Index>(rows), x.cols());
            for (std::size_t r = 0; r < rows; ++r) {
                batch.row(static_cast<Eigen::Index>(r)) =
                    x.row(static_cast<Eigen::Index>(order[start + r]));
            }

            GradientContext ctx;
            Matrix mask;
            Matrix corrupted;
            if (dropconnect != nullptr) {
                mask = bernoulli_matrix(m.weights.rows(), m.weights.cols(),
                                        1.0 - dropconnect->drop_fraction, noise_rng);
                ctx.mask = &mask;
            }
            if (denoise != nullptr) {
                corrupted = batch.cwiseProduct(bernoulli_matrix(
                    batch.rows(), batch.cols(), 1.0 - denoise->corrupt_fraction, noise_rng));
                ctx.corrupted_input = &corrupted;
            }

            auto diverged = [&](const std::string& why) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%g", rate);
                return DivergenceError("autoencoder training diverged at epoch " +
                                       std::to_string(epoch) + " with learning rate " + buf +
                                       ": " + why);
            };

            Gradients g;
            try {
                g = loss_gradients(m, batch, ctx);
            } catch (const NumericError& e) {
                throw diverged(e.what());
            }
            if (!std::isfinite(g.loss)) {
                throw diverged("non-finite loss");
            }
            const double step = rate / static_cast<double>(rows);
            m.weights -= step * g.weights;
            m.encoder_bias -= step * g.encoder_bias;
            m.decoder_bias -= step * g.decoder_bias;
            epoch_loss += g.loss;
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(n));
        rate *= config.lr_decay;
    }
    return result;
}

/// Hidden representation used downstream: the encoder with the full weight
/// matrix and no mask. With `scale_by_keep_prob`, the weighted sum (not the
/// bias) of a DropConnect layer is multiplied by 1 - drop_fraction.
inline Matrix features(const AEModel& m, const Matrix& x, bool scale_by_keep_prob = false) {
    detail::require_columns(x, m.input_dim(), "features");
    Matrix pre;
    pre.noalias() = x * m.weights.transpose();
    if (scale_by_keep_prob) {
        if (const auto* d = std::get_if<DropConnectRegularizer>(&m.config.regularizer)) {
            pre *= 1.0 - d->drop_fraction;
        }
    }
    pre.rowwise() += m.encoder_bias.transpose();
    return detail::activate(pre, m.config.activation);
}

inline void write_loss_trace_csv(const std::string& path, std::span<const double> trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << "epoch,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, trace[i]);
        out << buf;
    }
}

} // namespace ddae
