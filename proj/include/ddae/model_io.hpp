#pragma once

// Binary model files. Layout (all integers and floats little-endian):
//
//   "DDAE"                      magic, 4 bytes
//   u32 version                 currently 1
//   u32 num_classes
//   u8 label scheme             0 = {0,1}, 1 = {-1,+1}
//   u8 scale_by_keep_prob
//   u8 has_preprocessing
//   u8 reserved (0)
//   f64 preprocessing lo, f64 preprocessing hi
//   layer × 2:
//     u8 activation, u8 regularizer kind, u16 reserved
//     f64 regularizer parameter a, f64 regularizer parameter b
//     f64 learning rate, u64 epochs, u64 batch size, f64 lr decay,
//     f64 init scale, u64 seed
//     matrix weights, matrix encoder bias (n x 1), matrix decoder bias (n x 1)
//   f64 gamma, f64 C
//   matrix head training features, matrix beta
//   u32 CRC-32 of every preceding byte
//
// A matrix is u32 rows, u32 cols, then rows*cols f64 in row-major order.
// docs/model_format.md has an annotated hex dump.

#include <ddae/checksum.hpp>
#include <ddae/ddae.hpp>
#include <ddae/error.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace ddae {

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void matrix(const Matrix& m) {
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        const double* d = m.data();
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            f64(d[k]);
        }
    }
    void vector(const Vector& v) { matrix(Matrix(v)); }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    Matrix matrix() {
        const std::uint64_t rows = u32();
        const std::uint64_t cols = u32();
        if (rows * cols * 8 > data_.size() - pos_) {
            throw CorruptionError("model file: matrix block " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + " overruns the file");
        }
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        double* d = m.data();
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            d[k] = f64();
        }
        return m;
    }
    Vector vector() {
        Matrix m = matrix();
        if (m.cols() != 1 && m.size() != 0) {
            throw CorruptionError("model file: bias block is not a column");
        }
        return m.col(0);
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::span<const std::uint8_t> take(std::size_t n) {
        if (n > data_.size() - pos_) {
            throw CorruptionError("model file truncated");
        }
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t le(int n) {
        const auto s = take(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= std::uint64_t{s[static_cast<std::size_t>(i)]} << (8 * i);
        }
        return v;
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline void write_layer(ByteWriter& w, const AEModel& m) {
    const AEConfig& c = m.config;
    w.u8(static_cast<std::uint8_t>(c.activation));
    w.u8(static_cast<std::uint8_t>(c.regularizer.index()));
    w.u16(0);
    double a = 0.0;
    double b = 0.0;
    if (const auto* s = std::get_if<SparseRegularizer>(&c.regularizer)) {
        a = s->target;
        b = s->weight;
    } else if (const auto* d = std::get_if<DenoiseRegularizer>(&c.regularizer)) {
        a = d->corrupt_fraction;
    } else if (const auto* dc = std::get_if<DropConnectRegularizer>(&c.regularizer)) {
        a = dc->drop_fraction;
    }
    w.f64(a);
    w.f64(b);
    w.f64(c.learning_rate);
    w.u64(c.epochs);
    w.u64(c.batch_size);
    w.f64(c.lr_decay);
    w.f64(c.init_scale);
    w.u64(c.seed);
    w.matrix(m.weights);
    w.vector(m.encoder_bias);
    w.vector(m.decoder_bias);
}

inline AEModel read_layer(ByteReader& r) {
    AEModel m;
    AEConfig& c = m.config;
    const std::uint8_t activation = r.u8();
    const std::uint8_t kind = r.u8();
    r.u16();
    if (activation > 1 || kind > 3) {
        throw CorruptionError("model file: unknown activation or regularizer code");
    }
    c.activation = static_cast<Activation>(activation);
    const double a = r.f64();
    const double b = r.f64();
    switch (kind) {
    case 0: c.regularizer = NoRegularizer{}; break;
    case 1: c.regularizer = SparseRegularizer{a, b}; break;
    case 2: c.regularizer = DenoiseRegularizer{a}; break;
    default: c.regularizer = DropConnectRegularizer{a}; break;
    }
    c.learning_rate = r.f64();
    c.epochs = r.u64();
    c.batch_size = r.u64();
    c.lr_decay = r.f64();
    c.init_scale = r.f64();
    c.seed = r.u64();
    m.weights = r.matrix();
    m.encoder_bias = r.vector();
    m.decoder_bias = r.vector();
    c.input_dim = static_cast<std::size_t>(m.weights.cols());
    c.hidden_dim = static_cast<std::size_t>(m.weights.rows());
    if (m.encoder_bias.size() != m.weights.rows() || m.decoder_bias.size() != m.weights.cols()) {
        throw CorruptionError("model file: bias lengths do not match layer weights");
    }
    return m;
}

} // namespace detail

inline std::vector<std::uint8_t> serialize_model(const DDAEModel& m) {
    detail::ByteWriter w;
    w.bytes("DDAE", 4);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(m.num_classes));
    w.u8(m.scheme == LabelScheme::plus_minus_one ? 1 : 0);
    w.u8(m.scale_by_keep_prob ? 1 : 0);
    w.u8(m.preprocessing ? 1 : 0);
    w.u8(0);
    w.f64(m.preprocessing ? m.preprocessing->lo : 0.0);
    w.f64(m.preprocessing ? m.preprocessing->hi : 0.0);
    detail::write_layer(w, m.first);
    detail::write_layer(w, m.second);
    w.f64(m.head.gamma);
    w.f64(m.head.C);
    w.matrix(m.head.train_features);
    w.matrix(m.head.beta);
    auto& buf = w.buffer();
    w.u32(crc32_bytes(buf));
    return std::move(buf);
}

inline DDAEModel deserialize_model(std::span<const std::uint8_t> data) {
    if (data.size() < 4) {
        throw CorruptionError("model file truncated before the magic bytes");
    }
    if (std::memcmp(data.data(), "DDAE", 4) != 0) {
        throw VersionError("not a DDAE model file (bad magic)");
    }
    if (data.size() < 12) {
        throw CorruptionError("model file truncated in the header");
    }
    detail::ByteReader header(data.subspan(4, 4));
    const std::uint32_t version = header.u32();
    if (version != kModelFormatVersion) {
        throw VersionError("model format version " + std::to_string(version) +
                           " is not supported (expected " +
                           std::to_string(kModelFormatVersion) + ")");
    }
    const auto body = data.first(data.size() - 4);
    detail::ByteReader tail(data.last(4));
    if (crc32_bytes(body) != tail.u32()) {
        throw CorruptionError("model file checksum mismatch");
    }

    detail::ByteReader r(body.subspan(8));
    DDAEModel m;
    m.num_classes = static_cast<int>(r.u32());
    m.scheme = r.u8() == 1 ? LabelScheme::plus_minus_one : LabelScheme::zero_one;
    m.scale_by_keep_prob = r.u8() != 0;
    const bool has_pre = r.u8() != 0;
    r.u8();
    const double lo = r.f64();
    const double hi = r.f64();
    if (has_pre) {
        m.preprocessing = Normalization{lo, hi};
    }
    m.first = detail::read_layer(r);
    m.second = detail::read_layer(r);
    m.head.gamma = r.f64();
    m.head.C = r.f64();
    m.head.train_features = r.matrix();
    m.head.beta = r.matrix();
    if (!r.at_end()) {
        throw CorruptionError("model file has trailing bytes");
    }
    if (m.second.input_dim() != m.first.hidden_dim() ||
        static_cast<std::size_t>(m.head.train_features.cols()) != m.second.hidden_dim() ||
        m.head.beta.rows() != m.head.train_features.rows() ||
        m.head.beta.cols() != m.num_classes) {
        throw CorruptionError("model file: layer dimensions are inconsistent");
    }
    return m;
}

inline void save_model(const DDAEModel& m, const std::string& path) {
    const auto bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("write failed for " + path);
    }
}

inline DDAEModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path);
    }
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                          std::istreambuf_iterator<char>()};
    return deserialize_model(bytes);
}

} // namespace ddae
