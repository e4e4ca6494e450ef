#pragma once

#include <ddae/matrix.hpp>

#include <zlib.h>

#include <cstdint>
#include <span>

namespace ddae {

/// CRC-32 (IEEE 802.3 polynomial, as in zlib/PNG/gzip).
inline std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes,
                                 std::uint32_t seed = 0) noexcept {
    uLong crc = seed;
    // zlib takes uInt lengths; feed large buffers in chunks.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const std::size_t len = std::min(kChunk, bytes.size() - off);
        crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(len));
    }
    return static_cast<std::uint32_t>(crc);
}

/// CRC-32 of the matrix's row-major double storage (host byte order).
inline std::uint32_t crc32_matrix(const Matrix& m) noexcept {
    const auto* p = reinterpret_cast<const std::uint8_t*>(m.data());
    return crc32_bytes({p, static_cast<std::size_t>(m.size()) * sizeof(double)});
}

} // namespace ddae
