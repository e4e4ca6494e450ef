#pragma once

// Hold-out selection of the KELM kernel width and ridge constant.

#include <ddae/dataset.hpp>
#include <ddae/elm.hpp>
#include <ddae/error.hpp>
#include <ddae/matrix.hpp>
#include <ddae/rng.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace ddae {

/// {2^lo, ..., 2^hi}
inline std::vector<double> power_of_two_grid(int lo, int hi) {
    std::vector<double> out;
    for (int k = lo; k <= hi; ++k) {
        out.push_back(std::ldexp(1.0, k));
    }
    return out;
}

struct GridSpec {
    std::vector<double> gammas = power_of_two_grid(-4, 10);
    std::vector<double> Cs = power_of_two_grid(-4, 14);
    double validation_fraction = 0.1;
    std::uint64_t split_seed = 0;
};

struct GridPoint {
    double gamma = 0.0;
    double C = 0.0;
    double validation_accuracy = 0.0;
    bool failed = false;
};

struct GridSearchResult {
    double gamma = 0.0;
    double C = 0.0;
    double validation_accuracy = 0.0;
    std::vector<GridPoint> surface; ///< gamma-major, in grid order
};

/// Exhaustive search on a stratified train/validation split of (features,
/// labels). Highest validation accuracy wins; ties go to the smaller C, then
/// the smaller gamma. Grid points whose solve fails are kept in the surface
/// marked `failed`.
inline GridSearchResult kelm_grid_search(const Matrix& features, std::span<const int> labels,
                                         int num_classes, LabelScheme scheme,
                                         const GridSpec& spec) {
    if (spec.gammas.empty() || spec.Cs.empty()) {
        throw DomainError("grid search needs nonempty gamma and C grids");
    }
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw ShapeError("grid search: " + std::to_string(features.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
    }
    for (double g : spec.gammas) {
        require_positive_width(g);
    }
    for (double c : spec.Cs) {
        if (!(c > 0.0) || !std::isfinite(c)) {
            throw DomainError("grid search: C values must be positive");
        }
    }

    Rng rng(spec.split_seed);
    const SplitIndices split =
        stratified_split(labels, num_classes, spec.validation_fraction, rng);

    auto gather = [&](const std::vector<std::size_t>& idx, Matrix& x, std::vector<int>& y) {
        x.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
        y.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            x.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(idx[k]));
            y[k] = labels[idx[k]];
        }
    };
    Matrix x_train;
    Matrix x_val;
    std::vector<int> y_train;
    std::vector<int> y_val;
    gather(split.train, x_train, y_train);
    gather(split.validation, x_val, y_val);
    const Matrix targets = one_hot(y_train, num_classes, scheme).targets;

    const Matrix sq_train = squared_distances(x_train, x_train);
    const Matrix sq_val = squared_distances(x_val, x_train);

    GridSearchResult result;
    bool have_best = false;
    for (double gamma : spec.gammas) {
        const Matrix gram = gaussian_from_squared_distances(sq_train, gamma);
        const Matrix cross = gaussian_from_squared_distances(sq_val, gamma);
        for (double C : spec.Cs) {
            GridPoint point{gamma, C, 0.0, false};
            try {
                Matrix system = gram;
                system.diagonal().array() += 1.0 / C;
                const Matrix beta = solve_spd(system, targets);
                const auto predicted = argmax_rows(matmul(cross, beta));
                point.validation_accuracy = accuracy_percent(predicted, y_val);
            } catch (const SingularError&) {
                point.failed = true;
            } catch (const NumericError&) {
                point.failed = true;
            }
            result.surface.push_back(point);
            if (point.failed) {
                continue;
            }
            const bool better =
                !have_best || point.validation_accuracy > result.validation_accuracy ||
                (point.validation_accuracy == result.validation_accuracy &&
                 (C < result.C || (C == result.C && gamma < result.gamma)));
            if (better) {
                have_best = true;
                result.gamma = gamma;
                result.C = C;
                result.validation_accuracy = point.validation_accuracy;
            }
        }
    }
    if (!have_best) {
        throw SingularError("grid search: every grid point failed to solve");
    }
    return result;
}

inline void write_surface_csv(const std::string& path, const GridSearchResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << "gamma,C,validation_accuracy,status\n";
    char buf[128];
    for (const auto& p : result.surface) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.4f,%s\n", p.gamma, p.C,
                      p.validation_accuracy, p.failed ? "failed" : "ok");
        out << buf;
    }
}

} // namespace ddae
