#pragma once

// Dense real matrices and the handful of operations the models are built from.
// Storage is Eigen, row-major, double precision throughout. Samples are rows.

#include <ddae/error.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include <cmath>
#include <string>

namespace ddae {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& m) {
    return shape_string(m.rows(), m.cols());
}

/// Throws NumericError if any entry of `m` is NaN or infinite.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
    if (!m.derived().allFinite()) {
        throw NumericError(what + ": non-finite entry in " + shape_string(m));
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
    }
    Matrix out(a.rows(), b.cols());
    out.noalias() = a * b;
    require_finite(out, "matmul");
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("hadamard: shapes differ, " + shape_string(a) + " vs " + shape_string(b));
    }
    Matrix out = a.cwiseProduct(b);
    require_finite(out, "hadamard");
    return out;
}

inline Matrix transpose(const Matrix& a) { return a.transpose(); }

/// Overflow-free logistic function; exact 0 and 1 far in the tails.
inline double sigmoid(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

inline Matrix sigmoid(const Matrix& a) {
    return a.unaryExpr([](double t) { return sigmoid(t); });
}

namespace detail {

inline double residual_norm(const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& y) {
    return (a * x - y).norm();
}

} // namespace detail

/// Solves a·x = y for symmetric positive-definite `a`.
///
/// Cholesky first, partial-pivot LU if the Cholesky factorization breaks down.
/// Up to two rounds of iterative refinement are applied, and the result is
/// guaranteed to satisfy ‖a·x − y‖_F ≤ 1e-8·‖y‖_F or a SingularError is thrown.
/// No explicit inverse is ever formed.
inline Matrix solve_spd(const Matrix& a, const Matrix& y) {
    if (a.rows() != a.cols()) {
        throw ShapeError("solve_spd: matrix must be square, got " + shape_string(a));
    }
    if (y.rows() != a.rows()) {
        throw ShapeError("solve_spd: right-hand side " + shape_string(y) +
                         " does not match " + shape_string(a));
    }
    require_finite(a, "solve_spd matrix");
    require_finite(y, "solve_spd right-hand side");

    const Eigen::Index n = a.rows();
    const double scale = a.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale) {
                throw DomainError("solve_spd: matrix is not symmetric at (" + std::to_string(i) +
                                  "," + std::to_string(j) + ")");
            }
        }
    }

    const Eigen::MatrixXd acol = a;
    const Eigen::MatrixXd ycol = y;
    const double tolerance = 1e-8 * ycol.norm();

    auto refine = [&](const auto& factor, Eigen::MatrixXd x) {
        for (int round = 0; round < 2; ++round) {
            if (!x.allFinite() || detail::residual_norm(acol, x, ycol) <= tolerance) {
                break;
            }
            const Eigen::MatrixXd r = ycol - acol * x;
            x += factor.solve(r);
        }
        return x;
    };

    Eigen::MatrixXd x;
    Eigen::LLT<Eigen::MatrixXd> llt(acol);
    if (llt.info() == Eigen::Success) {
        x = refine(llt, llt.solve(ycol));
    }
    if (x.size() == 0 || !x.allFinite() || detail::residual_norm(acol, x, ycol) > tolerance) {
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(acol);
        x = refine(lu, lu.solve(ycol));
    }
    if (!x.allFinite()) {
        throw SingularError("solve_spd: factorization failed for " + shape_string(a));
    }
    const double residual = detail::residual_norm(acol, x, ycol);
    if (residual > tolerance) {
        throw SingularError("solve_spd: residual " + std::to_string(residual) +
                            " exceeds bound " + std::to_string(tolerance));
    }
    return x;
}

} // namespace ddae
