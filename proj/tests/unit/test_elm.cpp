#include <ddae/elm.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using ddae::Matrix;

namespace {

Matrix four_points() {
    Matrix x(4, 2);
    x << 0, 0, 0, 1, 3, 0, 3, 1;
    return x;
}

const std::vector<int> kFourLabels{0, 0, 1, 1};

} // namespace

TEST(GaussianKernel, UnitDiagonalAndSymmetry) {
    const Matrix x = oracle::random_matrix(12, 5, 3);
    const Matrix k = ddae::gaussian_kernel(x, x, 0.7);
    for (int i = 0; i < 12; ++i) {
        EXPECT_EQ(k(i, i), 1.0);
        for (int j = 0; j < 12; ++j) {
            EXPECT_EQ(k(i, j), k(j, i));
            EXPECT_GT(k(i, j), 0.0);
            EXPECT_LE(k(i, j), 1.0);
            EXPECT_NEAR(k(i, j), oracle::gaussian(x, i, x, j, 0.7), 1e-15);
        }
    }
}

TEST(GaussianKernel, IdenticalRowsGiveOneExactly) {
    Matrix x(2, 3);
    x << 0.1, 0.7, 0.3, 0.1, 0.7, 0.3;
    const Matrix k = ddae::gaussian_kernel(x, x, 0.01);
    EXPECT_EQ(k, Matrix::Ones(2, 2));
}

TEST(GaussianKernel, WideKernelIsFlat) {
    const Matrix x = oracle::random_matrix(6, 4, 8, 0.0, 1.0);
    const Matrix k = ddae::gaussian_kernel(x, x, 1e8);
    EXPECT_LE((k - Matrix::Ones(6, 6)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GaussianKernel, UnitDistance) {
    Matrix a(1, 2);
    a << 0, 0;
    Matrix b(1, 2);
    b << 0, 1;
    EXPECT_NEAR(ddae::gaussian_kernel(a, b, 1.0)(0, 0), 0.6065306597126334, 1e-15);
    EXPECT_THROW(ddae::gaussian_kernel(a, b, 0.0), ddae::DomainError);
    EXPECT_THROW(ddae::gaussian_kernel(a, Matrix(1, 3), 1.0), ddae::ShapeError);
}

// far pairs underflow to exactly zero instead of subnormals
TEST(GaussianKernel, FarPairsAreExactlyZero) {
    Matrix sq(1, 3);
    sq << 400.0, 500.0, 2000.0;
    const Matrix k = ddae::gaussian_from_squared_distances(sq, 1.0);
    EXPECT_EQ(k(0, 0), std::exp(-200.0));
    EXPECT_EQ(k(0, 1), 0.0);
    EXPECT_EQ(k(0, 2), 0.0);
    EXPECT_GE(std::exp(-200.0), ddae::kKernelFloor);
}

TEST(KelmFit, SingleSample) {
    Matrix x(1, 3);
    x << 0.2, 0.4, 0.6;
    Matrix y(1, 2);
    y << 1.0, -1.0;
    for (double C : {0.5, 1.0, 64.0}) {
        const auto m = ddae::kelm_fit(x, y, 2.0, C);
        EXPECT_NEAR(m.beta(0, 0), 1.0 / (1.0 / C + 1.0), 1e-15);
        EXPECT_NEAR(m.beta(0, 1), -1.0 / (1.0 / C + 1.0), 1e-15);
    }
}

TEST(KelmFit, MatchesExplicitInverse) {
    for (std::uint32_t seed = 0; seed < 10; ++seed) {
        const Matrix x = oracle::random_matrix(5, 3, seed, 0.0, 1.0);
        const Matrix y = oracle::random_matrix(5, 2, seed + 50);
        const double gamma = 0.5 + 0.1 * seed;
        const double C = 4.0;
        const auto m = ddae::kelm_fit(x, y, gamma, C);
        const Matrix ref = oracle::kelm_beta(x, y, gamma, C);
        EXPECT_LE((m.beta - ref).cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed;
    }
}

TEST(KelmFit, InterpolatesTrivialSetAtLargeC) {
    const auto targets = ddae::one_hot(kFourLabels, 2, ddae::LabelScheme::plus_minus_one);
    const auto m = ddae::kelm_fit(four_points(), targets, 1.0, 1e6);
    const auto p = ddae::kelm_predict(m, four_points());
    EXPECT_EQ(p.labels, kFourLabels);
    Matrix one(1, 2);
    one << 3, 1;
    EXPECT_EQ(ddae::kelm_predict(m, one).labels, std::vector<int>{1});
}

TEST(KelmFit, RejectsBadArguments) {
    const Matrix x = four_points();
    const Matrix y = Matrix::Ones(4, 2);
    EXPECT_THROW(ddae::kelm_fit(x, y, 1.0, 0.0), ddae::DomainError);
    EXPECT_THROW(ddae::kelm_fit(x, y, -1.0, 1.0), ddae::DomainError);
    EXPECT_THROW(ddae::kelm_fit(x, Matrix::Ones(3, 2), 1.0, 1.0), ddae::ShapeError);
}

TEST(KelmFit, PermutingTrainingRowsPermutesBeta) {
    const Matrix x = oracle::random_matrix(8, 3, 4, 0.0, 1.0);
    const Matrix y = oracle::random_matrix(8, 2, 5);
    std::vector<int> perm{3, 0, 7, 5, 1, 6, 2, 4};
    Matrix xp(8, 3);
    Matrix yp(8, 2);
    for (int i = 0; i < 8; ++i) {
        xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        yp.row(i) = y.row(perm[static_cast<std::size_t>(i)]);
    }
    const auto a = ddae::kelm_fit(x, y, 0.8, 10.0);
    const auto b = ddae::kelm_fit(xp, yp, 0.8, 10.0);
    for (int i = 0; i < 8; ++i) {
        EXPECT_LE((b.beta.row(i) - a.beta.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(),
                  1e-10);
    }
    const Matrix q = oracle::random_matrix(4, 3, 6, 0.0, 1.0);
    EXPECT_LE((ddae::kelm_predict(a, q).scores - ddae::kelm_predict(b, q).scores)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-10);
}

TEST(KelmFit, TrainingResidualShrinksWithC) {
    const Matrix x = oracle::random_matrix(20, 4, 7, 0.0, 1.0);
    const Matrix y = oracle::random_matrix(20, 3, 8);
    double last = INFINITY;
    for (double C : {0.25, 1.0, 4.0, 16.0, 64.0, 256.0}) {
        const auto m = ddae::kelm_fit(x, y, 0.5, C);
        const double residual = (ddae::kelm_predict(m, x).scores - y).norm();
        EXPECT_LT(residual, last) << "C " << C;
        last = residual;
    }
}

TEST(KelmPredict, MatchesScalarLoop) {
    for (std::uint32_t seed = 0; seed < 10; ++seed) {
        const Matrix x = oracle::random_matrix(5, 3, seed, 0.0, 1.0);
        const Matrix y = oracle::random_matrix(5, 4, seed + 10);
        const Matrix q = oracle::random_matrix(6, 3, seed + 20, 0.0, 1.0);
        const auto m = ddae::kelm_fit(x, y, 0.9, 8.0);
        const auto p = ddae::kelm_predict(m, q);
        for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 4; ++c) {
                EXPECT_NEAR(p.scores(r, c), oracle::kelm_score(x, m.beta, q, r, c, 0.9), 1e-10);
            }
        }
    }
}

TEST(KelmPredict, SymmetricPointTiesToClassZero) {
    Matrix x(2, 1);
    x << -1.0, 1.0;
    Matrix y(2, 2);
    y << 1.0, -1.0, -1.0, 1.0;
    const auto m = ddae::kelm_fit(x, y, 1.0, 1.0);
    Matrix mid(1, 1);
    mid << 0.0;
    const auto p = ddae::kelm_predict(m, mid);
    EXPECT_NEAR(p.scores(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(p.scores(0, 1), 0.0, 1e-15);
    EXPECT_EQ(p.labels[0], 0);
}

TEST(KelmPredict, RowIndependence) {
    const Matrix x = oracle::random_matrix(10, 3, 1, 0.0, 1.0);
    const Matrix y = oracle::random_matrix(10, 2, 2);
    const auto m = ddae::kelm_fit(x, y, 0.6, 5.0);
    const Matrix q = oracle::random_matrix(5, 3, 3, 0.0, 1.0);
    Matrix reversed = q.colwise().reverse();
    const auto a = ddae::kelm_predict(m, q);
    const auto b = ddae::kelm_predict(m, reversed);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(a.labels[static_cast<std::size_t>(i)], b.labels[static_cast<std::size_t>(4 - i)]);
        EXPECT_LE((a.scores.row(i) - b.scores.row(4 - i)).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Elm, SingleHiddenNodeSingleSample) {
    Matrix x(1, 2);
    x << 0.3, 0.6;
    Matrix y(1, 1);
    y << 0.8;
    ddae::Rng rng(1);
    const auto m = ddae::elm_fit(x, y, 1, 0.0, rng);
    const Matrix h = ddae::elm_hidden(m, x);
    ASSERT_EQ(h.rows(), 1);
    ASSERT_EQ(h.cols(), 1);
    EXPECT_NEAR(m.beta(0, 0), 0.8 / h(0, 0), 1e-14);
    ddae::Rng rng2(1);
    const auto r = ddae::elm_fit(x, y, 1, 2.0, rng2);
    EXPECT_NEAR(r.beta(0, 0), h(0, 0) * 0.8 / (h(0, 0) * h(0, 0) + 0.5), 1e-14);
}

TEST(Elm, RidgeResidual) {
    const Matrix x = oracle::random_matrix(60, 5, 4, 0.0, 1.0);
    const Matrix y = oracle::random_matrix(60, 3, 5);
    ddae::Rng rng(9);
    const auto m = ddae::elm_fit(x, y, 25, 16.0, rng);
    const Matrix h = ddae::elm_hidden(m, x);
    const Matrix lhs = oracle::triple_loop(h.transpose(), h) + Matrix::Identity(25, 25) / 16.0;
    const Matrix rhs = oracle::triple_loop(h.transpose(), y);
    EXPECT_LE((oracle::triple_loop(lhs, m.beta) - rhs).norm(), 1e-8 * rhs.norm());
}

TEST(Elm, DeterministicForSeed) {
    const Matrix x = oracle::random_matrix(30, 4, 4, 0.0, 1.0);
    const Matrix y = oracle::random_matrix(30, 2, 5);
    ddae::Rng a(3);
    ddae::Rng b(3);
    EXPECT_EQ(ddae::elm_fit(x, y, 10, 0.0, a).beta, ddae::elm_fit(x, y, 10, 0.0, b).beta);
}

TEST(Elm, InterpolatesSmallSet) {
    const auto targets = ddae::one_hot(kFourLabels, 2, ddae::LabelScheme::plus_minus_one);
    ddae::Rng rng(2);
    const auto m = ddae::elm_fit(four_points(), targets, 4, 0.0, rng);
    EXPECT_TRUE(m.warnings.empty());
    EXPECT_EQ(ddae::elm_predict(m, four_points()).labels, kFourLabels);
    ddae::Rng rng2(2);
    const auto r = ddae::elm_fit(four_points(), targets, 20, 1e6, rng2);
    EXPECT_EQ(ddae::elm_predict(r, four_points()).labels, kFourLabels);
}

TEST(Elm, ZeroInputScoresAreHalfColumnSums) {
    const Matrix x = oracle::random_matrix(20, 3, 1, 0.0, 1.0);
    const Matrix y = oracle::random_matrix(20, 2, 2);
    ddae::Rng rng(5);
    auto m = ddae::elm_fit(x, y, 6, 4.0, rng);
    m.hidden_bias.setZero();
    const auto p = ddae::elm_predict(m, Matrix::Zero(1, 3));
    for (int c = 0; c < 2; ++c) {
        EXPECT_NEAR(p.scores(0, c), 0.5 * m.beta.col(c).sum(), 1e-14);
    }
}

TEST(Elm, RankDeficientFallsBackToRidge) {
    const Matrix x = Matrix::Zero(5, 2);
    const Matrix y = oracle::random_matrix(5, 2, 1);
    ddae::Rng rng(1);
    const auto m = ddae::elm_fit(x, y, 3, 0.0, rng);
    EXPECT_EQ(m.C, 1e8);
    ASSERT_EQ(m.warnings.size(), 1u);
    EXPECT_TRUE(m.beta.allFinite());
}

TEST(Elm, MatchesScalarLoop) {
    const Matrix x = oracle::random_matrix(5, 3, 6, 0.0, 1.0);
    const Matrix y = oracle::random_matrix(5, 2, 7);
    ddae::Rng rng(8);
    const auto m = ddae::elm_fit(x, y, 4, 2.0, rng);
    const Matrix q = oracle::random_matrix(3, 3, 9, 0.0, 1.0);
    const auto p = ddae::elm_predict(m, q);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 2; ++c) {
            double s = 0.0;
            for (int l = 0; l < 4; ++l) {
                double pre = m.hidden_bias(l);
                for (int k = 0; k < 3; ++k) {
                    pre += m.hidden_weights(l, k) * q(r, k);
                }
                s += oracle::logistic(pre) * m.beta(l, c);
            }
            EXPECT_NEAR(p.scores(r, c), s, 1e-10);
        }
    }
}
