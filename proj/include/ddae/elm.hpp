#pragma once

// Closed-form classifiers: extreme learning machine (ELM), its ridge variant
// (RELM), and the Gaussian-kernel ELM (KELM) used as the head of the stack.

#include <ddae/dataset.hpp>
#include <ddae/error.hpp>
#include <ddae/matrix.hpp>
#include <ddae/rng.hpp>

#include <Eigen/QR>

#include <cmath>
#include <string>
#include <vector>

namespace ddae {

/// Pairwise squared Euclidean distances between the rows of a and b,
/// summed coordinate by coordinate (so identical rows give exactly 0).
inline Matrix squared_distances(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("squared_distances: " + shape_string(a) + " and " + shape_string(b) +
                         " differ in column count");
    }
    Matrix out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            out(i, j) = (ai - b.row(j)).squaredNorm();
        }
    }
    return out;
}

inline void require_positive_width(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw DomainError("kernel width must be positive and finite, got " +
                          std::to_string(gamma));
    }
}

/// Kernel values below this are stored as exact zeros. They are far under
/// double rounding next to the unit diagonal, and left in place they push the
/// factorization into subnormal arithmetic, which is several times slower.
inline constexpr double kKernelFloor = 1e-100;

/// exp(-d / (2 γ²)) applied to a matrix of squared distances.
inline Matrix gaussian_from_squared_distances(const Matrix& sq, double gamma) {
    require_positive_width(gamma);
    const double scale = -1.0 / (2.0 * gamma * gamma);
    const double cutoff = std::log(kKernelFloor);
    return sq.unaryExpr([scale, cutoff](double d) {
        const double e = d * scale;
        return e < cutoff ? 0.0 : std::exp(e);
    });
}

/// K[i, j] = exp(-‖a_i − b_j‖² / (2 γ²)).
inline Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double gamma) {
    require_positive_width(gamma);
    return gaussian_from_squared_distances(squared_distances(a, b), gamma);
}

struct Prediction {
    Matrix scores;
    std::vector<int> labels;
};

struct KELMModel {
    Matrix train_features; ///< N x D
    double gamma = 1.0;
    double C = 1.0;
    Matrix beta; ///< N x num_classes
};

/// β = (I/C + Ω)⁻¹ Y with Ω the Gaussian Gram matrix of the training rows,
/// obtained by a factorized solve.
inline KELMModel kelm_fit_from_gram(Matrix features, const Matrix& gram, const Matrix& targets,
                                    double gamma, double C) {
    if (!(C > 0.0) || !std::isfinite(C)) {
        throw DomainError("KELM ridge constant must be positive and finite");
    }
    Matrix system = gram;
    system.diagonal().array() += 1.0 / C;
    KELMModel m;
    try {
        m.beta = solve_spd(system, targets);
    } catch (const SingularError& e) {
        throw SingularError(std::string("kelm_fit (gamma=") + std::to_string(gamma) +
                            ", C=" + std::to_string(C) + "): " + e.what());
    }
    m.train_features = std::move(features);
    m.gamma = gamma;
    m.C = C;
    return m;
}

inline KELMModel kelm_fit(const Matrix& features, const Matrix& targets, double gamma, double C) {
    if (features.rows() != targets.rows()) {
        throw ShapeError("kelm_fit: " + std::to_string(features.rows()) + " samples but " +
                         std::to_string(targets.rows()) + " target rows");
    }
    require_positive_width(gamma);
    return kelm_fit_from_gram(features, gaussian_kernel(features, features, gamma), targets, gamma,
                              C);
}

inline KELMModel kelm_fit(const Matrix& features, const LabelEncoding& targets, double gamma,
                          double C) {
    return kelm_fit(features, targets.targets, gamma, C);
}

inline Prediction kelm_predict(const KELMModel& m, const Matrix& x) {
    if (x.cols() != m.train_features.cols()) {
        throw ShapeError("kelm_predict: input " + shape_string(x) + " vs training features " +
                         shape_string(m.train_features));
    }
    Prediction p;
    p.scores = matmul(gaussian_kernel(x, m.train_features, m.gamma), m.beta);
    p.labels = argmax_rows(p.scores);
    return p;
}

struct ELMModel {
    Matrix hidden_weights; ///< L x D, frozen
    Vector hidden_bias;    ///< L, frozen
    Matrix beta;           ///< L x num_classes
    double C = 0.0;        ///< 0: minimum-norm least squares
    std::vector<std::string> warnings;
};

inline Matrix elm_hidden(const ELMModel& m, const Matrix& x) {
    if (x.cols() != m.hidden_weights.cols()) {
        throw ShapeError("ELM: input " + shape_string(x) + " vs hidden weights " +
                         shape_string(m.hidden_weights));
    }
    Matrix pre;
    pre.noalias() = x * m.hidden_weights.transpose();
    pre.rowwise() += m.hidden_bias.transpose();
    return sigmoid(pre);
}

/// Random sigmoid hidden layer (weights and biases uniform in [-1, 1]) and a
/// closed-form output layer. C = 0 gives the minimum-norm least-squares ELM;
/// C > 0 gives RELM, β = (I/C + HᵀH)⁻¹ HᵀY.
inline ELMModel elm_fit(const Matrix& features, const Matrix& targets, std::size_t hidden,
                        double C, Rng& rng) {
    if (hidden == 0) {
        throw DomainError("ELM needs at least one hidden node");
    }
    if (features.rows() != targets.rows()) {
        throw ShapeError("elm_fit: " + std::to_string(features.rows()) + " samples but " +
                         std::to_string(targets.rows()) + " target rows");
    }
    if (!(C >= 0.0) || !std::isfinite(C)) {
        throw DomainError("ELM ridge constant must be nonnegative and finite");
    }
    const auto L = static_cast<Eigen::Index>(hidden);
    ELMModel m;
    m.hidden_weights = uniform_matrix(L, features.cols(), -1.0, 1.0, rng);
    m.hidden_bias = uniform_matrix(L, 1, -1.0, 1.0, rng).col(0);
    m.C = C;
    const Matrix h = elm_hidden(m, features);

    if (C == 0.0) {
        const Eigen::MatrixXd hcol = h;
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(hcol);
        if (cod.rank() == std::min(h.rows(), h.cols())) {
            m.beta = cod.solve(Eigen::MatrixXd(targets));
            if (m.beta.allFinite()) {
                return m;
            }
        }
        m.warnings.push_back("hidden-layer matrix is rank deficient (rank " +
                             std::to_string(cod.rank()) + "); fell back to ridge C=1e8");
        m.C = 1e8;
    }
    Matrix gram;
    gram.noalias() = h.transpose() * h;
    gram.diagonal().array() += 1.0 / m.C;
    Matrix rhs;
    rhs.noalias() = h.transpose() * targets;
    m.beta = solve_spd(gram, rhs);
    return m;
}

inline ELMModel elm_fit(const Matrix& features, const LabelEncoding& targets, std::size_t hidden,
                        double C, Rng& rng) {
    return elm_fit(features, targets.targets, hidden, C, rng);
}

inline Prediction elm_predict(const ELMModel& m, const Matrix& x) {
    Prediction p;
    p.scores = matmul(elm_hidden(m, x), m.beta);
    p.labels = argmax_rows(p.scores);
    return p;
}

} // namespace ddae
