#pragma once

// Grayscale tile grids written as binary PGM (P5).

#include <ddae/dataset.hpp>
#include <ddae/error.hpp>
#include <ddae/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace ddae {

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; ///< row-major, height x width
};

enum class TileScaling {
    clamp_unit,  ///< values already in [0, 1]
    per_tile_minmax,
};

/// Lays out each row of `tiles` as a shape.height x shape.width tile,
/// `columns` tiles per grid row, `separator` background pixels between tiles.
inline GrayImage tile_grid(const Matrix& tiles, ImageShape shape, std::size_t columns,
                           std::size_t separator, TileScaling scaling,
                           std::uint8_t background = 0) {
    if (shape.height * shape.width != static_cast<std::size_t>(tiles.cols())) {
        throw ShapeError("tile_grid: rows of length " + std::to_string(tiles.cols()) +
                         " cannot be shown as " + std::to_string(shape.height) + "x" +
                         std::to_string(shape.width) + " tiles");
    }
    if (columns == 0) {
        throw DomainError("tile_grid: need at least one column");
    }
    const auto count = static_cast<std::size_t>(tiles.rows());
    const std::size_t grid_rows = (count + columns - 1) / columns;
    const std::size_t grid_cols = std::min(columns, std::max<std::size_t>(count, 1));
    GrayImage img;
    img.width = grid_cols * shape.width + (grid_cols - 1) * separator;
    img.height = grid_rows == 0 ? 0 : grid_rows * shape.height + (grid_rows - 1) * separator;
    img.pixels.assign(img.width * img.height, background);

    for (std::size_t t = 0; t < count; ++t) {
        const auto row = tiles.row(static_cast<Eigen::Index>(t));
        double lo = 0.0;
        double span = 1.0;
        if (scaling == TileScaling::per_tile_minmax) {
            lo = row.minCoeff();
            span = row.maxCoeff() - lo;
        }
        const std::size_t y0 = (t / columns) * (shape.height + separator);
        const std::size_t x0 = (t % columns) * (shape.width + separator);
        for (std::size_t r = 0; r < shape.height; ++r) {
            for (std::size_t c = 0; c < shape.width; ++c) {
                double v = row(static_cast<Eigen::Index>(r * shape.width + c));
                v = span > 0.0 ? (v - lo) / span : 0.0;
                v = std::clamp(v, 0.0, 1.0);
                img.pixels[(y0 + r) * img.width + x0 + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

/// Reads back a P5 image written by write_pgm.
inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    GrayImage img;
    int maxval = 0;
    if (!(in >> magic >> img.width >> img.height >> maxval) || magic != "P5" || maxval != 255) {
        throw FormatError(path + ": not an 8-bit binary PGM");
    }
    in.get();
    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!in) {
        throw LengthError(path + ": truncated pixel data");
    }
    return img;
}

} // namespace ddae
