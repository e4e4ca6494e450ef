#pragma once

// Seeded random source. The generator is xoshiro256** (Blackman & Vigna),
// seeded through splitmix64. Every derived quantity (uniform doubles, bounded
// integers, shuffles) is computed here with fixed integer arithmetic, so the
// same seed reproduces the same stream on every platform and compiler.
// std::uniform_*_distribution is deliberately not used: its output is
// implementation-defined.

#include <ddae/error.hpp>
#include <ddae/matrix.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

namespace ddae {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) {
            word = splitmix64(sm);
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent stream keyed by (seed, stream id). Does not advance *this.
    Rng derive(std::uint64_t stream) const noexcept {
        std::uint64_t sm = seed_ ^ (stream * 0xD1B54A32D192ED03ULL);
        return Rng(splitmix64(sm));
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound), unbiased (Lemire's multiply-and-reject).
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) {
            throw DomainError("Rng::below: bound must be positive");
        }
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Fisher-Yates, walking from the back.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
};

/// 0/1 matrix whose entries are independently 1 with probability `p`,
/// filled in row-major order.
inline Matrix bernoulli_matrix(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("bernoulli_matrix: probability " + std::to_string(p) +
                          " outside [0, 1]");
    }
    Matrix out(rows, cols);
    double* data = out.data();
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        data[k] = rng.uniform() < p ? 1.0 : 0.0;
    }
    return out;
}

/// Entries uniform in [lo, hi), row-major fill order.
inline Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi,
                             Rng& rng) {
    Matrix out(rows, cols);
    double* data = out.data();
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        data[k] = rng.uniform(lo, hi);
    }
    return out;
}

} // namespace ddae
