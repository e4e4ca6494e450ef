#pragma once

// Labelled sample sets: IDX (MNIST) and sparse-text (libsvm-style, USPS)
// ingestion, stratified subsampling and splitting, and target encodings.

#include <ddae/error.hpp>
#include <ddae/matrix.hpp>
#include <ddae/rng.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace ddae {

struct ImageShape {
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Affine map raw -> [0, 1] fitted on a training split: (v - lo) / (hi - lo).
struct Normalization {
    double lo = 0.0;
    double hi = 1.0;

    double apply(double v) const noexcept {
        if (hi <= lo) {
            return 0.0;
        }
        return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    }

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct Dataset {
    Matrix samples; ///< N x D, every entry in [0, 1]
    std::vector<int> labels;
    int num_classes = 0;
    std::optional<ImageShape> image_shape;
    std::optional<Normalization> normalization;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(samples.cols()); }

    /// Checks the type invariants; throws ConsistencyError / RangeError.
    void validate() const {
        if (static_cast<std::size_t>(samples.rows()) != labels.size()) {
            throw ConsistencyError("dataset has " + std::to_string(samples.rows()) +
                                   " samples but " + std::to_string(labels.size()) + " labels");
        }
        if (num_classes <= 0) {
            throw ConsistencyError("dataset must have at least one class");
        }
        for (int label : labels) {
            if (label < 0 || label >= num_classes) {
                throw RangeError("label " + std::to_string(label) + " outside [0, " +
                                 std::to_string(num_classes) + ")");
            }
        }
        if (samples.size() > 0 && (samples.minCoeff() < 0.0 || samples.maxCoeff() > 1.0)) {
            throw RangeError("sample values must lie in [0, 1]");
        }
        if (image_shape && image_shape->height * image_shape->width != dim()) {
            throw ConsistencyError("image shape " + std::to_string(image_shape->height) + "x" +
                                   std::to_string(image_shape->width) +
                                   " does not factor feature dimension " + std::to_string(dim()));
        }
    }

    /// Rows at `indices`, in that order. Metadata is carried over.
    Dataset select(std::span<const std::size_t> indices) const {
        Dataset out;
        out.samples.resize(static_cast<Eigen::Index>(indices.size()), samples.cols());
        out.labels.reserve(indices.size());
        for (std::size_t k = 0; k < indices.size(); ++k) {
            if (indices[k] >= size()) {
                throw RangeError("row index " + std::to_string(indices[k]) + " out of range");
            }
            out.samples.row(static_cast<Eigen::Index>(k)) =
                samples.row(static_cast<Eigen::Index>(indices[k]));
            out.labels.push_back(labels[indices[k]]);
        }
        out.num_classes = num_classes;
        out.image_shape = image_shape;
        out.normalization = normalization;
        return out;
    }
};

/// Per-class counts, length num_classes.
inline std::vector<std::size_t> class_counts(std::span<const int> labels, int num_classes) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int label : labels) {
        if (label < 0 || label >= num_classes) {
            throw RangeError("label " + std::to_string(label) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        }
        ++counts[static_cast<std::size_t>(label)];
    }
    return counts;
}

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                               const std::string& path) {
    if (offset + 4 > bytes.size()) {
        throw LengthError(path + ": truncated header (" + std::to_string(bytes.size()) +
                          " bytes)");
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline std::string hex32(std::uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08X", v);
    return buf;
}

} // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image file (magic 0x00000803, dims N x rows x cols) and the
/// matching label file (magic 0x00000801). Pixels are scaled by 1/255.
/// `num_classes` of 0 means max label + 1.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int num_classes = 0) {
    const auto image_bytes = detail::read_file_bytes(images_path);
    const auto label_bytes = detail::read_file_bytes(labels_path);

    const std::uint32_t image_magic = detail::read_be32(image_bytes, 0, images_path);
    if (image_magic != kIdxImagesMagic) {
        throw FormatError(images_path + ": bad IDX image magic " + detail::hex32(image_magic) +
                          ", expected " + detail::hex32(kIdxImagesMagic));
    }
    const std::uint32_t label_magic = detail::read_be32(label_bytes, 0, labels_path);
    if (label_magic != kIdxLabelsMagic) {
        throw FormatError(labels_path + ": bad IDX label magic " + detail::hex32(label_magic) +
                          ", expected " + detail::hex32(kIdxLabelsMagic));
    }

    const std::size_t count = detail::read_be32(image_bytes, 4, images_path);
    const std::size_t height = detail::read_be32(image_bytes, 8, images_path);
    const std::size_t width = detail::read_be32(image_bytes, 12, images_path);
    const std::size_t label_count = detail::read_be32(label_bytes, 4, labels_path);
    if (count != label_count) {
        throw ConsistencyError(images_path + " holds " + std::to_string(count) + " images but " +
                               labels_path + " holds " + std::to_string(label_count) + " labels");
    }
    const std::size_t dim = height * width;
    if (image_bytes.size() < 16 + count * dim) {
        throw LengthError(images_path + ": expected " + std::to_string(16 + count * dim) +
                          " bytes, found " + std::to_string(image_bytes.size()));
    }
    if (label_bytes.size() < 8 + count) {
        throw LengthError(labels_path + ": expected " + std::to_string(8 + count) +
                          " bytes, found " + std::to_string(label_bytes.size()));
    }

    Dataset out;
    out.samples.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    const std::uint8_t* pixels = image_bytes.data() + 16;
    double* dst = out.samples.data();
    for (std::size_t k = 0; k < count * dim; ++k) {
        dst[k] = static_cast<double>(pixels[k]) / 255.0;
    }
    out.labels.resize(count);
    int max_label = -1;
    for (std::size_t i = 0; i < count; ++i) {
        out.labels[i] = label_bytes[8 + i];
        max_label = std::max(max_label, out.labels[i]);
    }
    out.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    out.image_shape = ImageShape{height, width};
    out.validate();
    return out;
}

/// Reads `<label> <index>:<value> ...` lines with 1-based indices <= dim.
///
/// Values are mapped into [0, 1] with a single affine map. When `stats` is
/// absent the map is fitted to this file's global min/max, widened to cover
/// [0, 1], and stored in the result; pass the training split's statistics when loading the
/// matching test split. `label_base` is subtracted from every label (1 for
/// distributions that number classes from 1).
inline Dataset load_sparse_text(const std::string& path, std::size_t dim,
                                std::optional<Normalization> stats = std::nullopt,
                                int label_base = 0, int num_classes = 0) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path);
    }
    std::vector<std::vector<std::pair<std::size_t, double>>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream tokens(line);
        std::string token;
        if (!(tokens >> token)) {
            continue;
        }
        const auto where = path + ":" + std::to_string(line_no);
        double label_value = 0.0;
        {
            const auto [ptr, ec] =
                std::from_chars(token.data(), token.data() + token.size(), label_value);
            if (ec != std::errc() || ptr != token.data() + token.size() ||
                label_value != std::floor(label_value)) {
                throw ParseError(where + ": bad label '" + token + "'");
            }
        }
        const int label = static_cast<int>(label_value) - label_base;
        if (label < 0) {
            throw RangeError(where + ": label " + token + " below label base");
        }
        std::vector<std::pair<std::size_t, double>> entries;
        while (tokens >> token) {
            const auto colon = token.find(':');
            if (colon == std::string::npos) {
                throw ParseError(where + ": expected index:value, got '" + token + "'");
            }
            std::size_t index = 0;
            double value = 0.0;
            const char* begin = token.data();
            const char* end = begin + token.size();
            auto r1 = std::from_chars(begin, begin + colon, index);
            auto r2 = std::from_chars(begin + colon + 1, end, value);
            if (r1.ec != std::errc() || r1.ptr != begin + colon || r2.ec != std::errc() ||
                r2.ptr != end || colon == 0) {
                throw ParseError(where + ": malformed entry '" + token + "'");
            }
            if (index < 1 || index > dim) {
                throw RangeError(where + ": index " + std::to_string(index) + " outside [1, " +
                                 std::to_string(dim) + "]");
            }
            if (!std::isfinite(value)) {
                throw ParseError(where + ": non-finite value in '" + token + "'");
            }
            entries.emplace_back(index - 1, value);
        }
        rows.push_back(std::move(entries));
        labels.push_back(label);
    }

    Matrix raw = Matrix::Zero(static_cast<Eigen::Index>(rows.size()),
                              static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& [j, v] : rows[i]) {
            raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    if (!stats) {
        // The fitted range always covers [0, 1], so data already in the unit
        // interval passes through unchanged.
        stats = raw.size() > 0 ? Normalization{std::min(0.0, raw.minCoeff()),
                                               std::max(1.0, raw.maxCoeff())}
                               : Normalization{};
    }

    Dataset out;
    out.samples = raw.unaryExpr([s = *stats](double v) { return s.apply(v); });
    out.labels = std::move(labels);
    const int max_label =
        out.labels.empty() ? -1 : *std::max_element(out.labels.begin(), out.labels.end());
    out.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    out.normalization = stats;
    out.validate();
    return out;
}

/// Proportional per-class quotas summing to n. Floors first; the leftover
/// units go to classes chosen in rng-shuffled order, one each, skipping
/// classes already exhausted.
inline std::vector<std::size_t> stratified_quotas(std::span<const std::size_t> counts,
                                                  std::size_t n, Rng& rng) {
    std::size_t total = 0;
    for (auto c : counts) {
        total += c;
    }
    if (n > total) {
        throw DomainError("cannot draw " + std::to_string(n) + " of " + std::to_string(total) +
                          " samples");
    }
    std::vector<std::size_t> quota(counts.size(), 0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        quota[c] = total == 0 ? 0 : counts[c] * n / total;
        assigned += quota[c];
    }
    std::vector<std::size_t> order(counts.size());
    for (std::size_t c = 0; c < order.size(); ++c) {
        order[c] = c;
    }
    rng.shuffle(std::span<std::size_t>(order));
    while (assigned < n) {
        for (std::size_t c : order) {
            if (assigned == n) {
                break;
            }
            if (quota[c] < counts[c]) {
                ++quota[c];
                ++assigned;
            }
        }
    }
    return quota;
}

/// Row indices grouped by class, each group in ascending order.
inline std::vector<std::vector<std::size_t>> indices_by_class(std::span<const int> labels,
                                                             int num_classes) {
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        groups[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    return groups;
}

/// Stratified draw of n rows without replacement. The returned rows are in
/// rng-shuffled order, so n == N yields a permutation of the full set.
inline Dataset subsample(const Dataset& d, std::size_t n, Rng& rng) {
    if (n > d.size()) {
        throw DomainError("subsample: requested " + std::to_string(n) + " rows from a set of " +
                          std::to_string(d.size()));
    }
    const auto counts = class_counts(d.labels, d.num_classes);
    const auto quota = stratified_quotas(counts, n, rng);
    auto groups = indices_by_class(d.labels, d.num_classes);
    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    for (std::size_t c = 0; c < groups.size(); ++c) {
        rng.shuffle(std::span<std::size_t>(groups[c]));
        chosen.insert(chosen.end(), groups[c].begin(),
                      groups[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
    rng.shuffle(std::span<std::size_t>(chosen));
    return d.select(chosen);
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Stratified hold-out split. Every class in [0, num_classes) must contribute
/// at least one row to each side, otherwise SplitError.
inline SplitIndices stratified_split(std::span<const int> labels, int num_classes,
                                     double validation_fraction, Rng& rng) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw DomainError("validation fraction must lie in (0, 1)");
    }
    auto groups = indices_by_class(labels, num_classes);
    SplitIndices out;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        auto& group = groups[c];
        if (group.size() < 2) {
            throw SplitError("class " + std::to_string(c) + " has " +
                             std::to_string(group.size()) +
                             " samples; the validation split would leave a side without it");
        }
        rng.shuffle(std::span<std::size_t>(group));
        auto n_val = static_cast<std::size_t>(
            std::llround(validation_fraction * static_cast<double>(group.size())));
        n_val = std::clamp<std::size_t>(n_val, 1, group.size() - 1);
        out.validation.insert(out.validation.end(), group.begin(),
                              group.begin() + static_cast<std::ptrdiff_t>(n_val));
        out.train.insert(out.train.end(), group.begin() + static_cast<std::ptrdiff_t>(n_val),
                         group.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    return out;
}

enum class LabelScheme { zero_one, plus_minus_one };

struct LabelEncoding {
    Matrix targets; ///< N x num_classes, one hot entry per row
    LabelScheme scheme = LabelScheme::plus_minus_one;
};

inline LabelEncoding one_hot(std::span<const int> labels, int num_classes,
                             LabelScheme scheme = LabelScheme::plus_minus_one) {
    if (num_classes <= 0) {
        throw DomainError("one_hot: num_classes must be positive");
    }
    const double off = scheme == LabelScheme::plus_minus_one ? -1.0 : 0.0;
    LabelEncoding out{Matrix::Constant(static_cast<Eigen::Index>(labels.size()), num_classes, off),
                      scheme};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw RangeError("one_hot: label " + std::to_string(labels[i]) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        }
        out.targets(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return out;
}

/// Row-wise argmax; ties go to the lowest column index.
inline std::vector<int> argmax_rows(const Matrix& scores) {
    std::vector<int> out(static_cast<std::size_t>(scores.rows()), 0);
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < scores.cols(); ++j) {
            if (scores(i, j) > scores(i, best)) {
                best = j;
            }
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

/// Percentage of positions where the two label vectors agree.
inline double accuracy_percent(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) {
        throw ShapeError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
    }
    if (truth.empty()) {
        return 0.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        correct += predicted[i] == truth[i] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
}

} // namespace ddae
