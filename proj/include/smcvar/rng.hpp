#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace smcvar {

// Philox4x32-10 keyed counter block (Salmon et al. 2011).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t mul_a = 0xD2511F53u;
    constexpr std::uint32_t mul_b = 0xCD9E8D57u;
    constexpr std::uint32_t weyl_a = 0x9E3779B9u;
    constexpr std::uint32_t weyl_b = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(mul_a) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(mul_b) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
               static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
               static_cast<std::uint32_t>(p0)};
        key[0] += weyl_a;
        key[1] += weyl_b;
    }
    return ctr;
}

/// Counter-based random stream. A (seed, stream) pair addresses a
/// deterministic sequence; distinct stream ids give statistically
/// independent sequences with no jump-ahead cost, so replicated runs
/// can be dispatched to workers in any order.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint32_t next_u32() {
        if (pos_ == 4) {
            block_ = philox4x32(
                {static_cast<std::uint32_t>(counter_),
                 static_cast<std::uint32_t>(counter_ >> 32),
                 static_cast<std::uint32_t>(stream_),
                 static_cast<std::uint32_t>(stream_ >> 32)},
                {static_cast<std::uint32_t>(seed_),
                 static_cast<std::uint32_t>(seed_ >> 32)});
            ++counter_;
            pos_ = 0;
        }
        return block_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform draw in the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    /// Standard normal via Box-Muller; the antithetic draw is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double theta = 2.0 * M_PI * uniform();
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        // Rejection-free multiply-shift map; bias is < n / 2^64.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Derive a statistically independent child stream. The mapping is a
    /// Philox block keyed by the parent identity, so any (parent, index)
    /// pair lands on a reproducible stream id.
    RngStream child(std::uint64_t index) const {
        const auto b = philox4x32(
            {static_cast<std::uint32_t>(index),
             static_cast<std::uint32_t>(index >> 32),
             static_cast<std::uint32_t>(stream_),
             static_cast<std::uint32_t>(stream_ >> 32)},
            {static_cast<std::uint32_t>(seed_ ^ 0x5DEECE66Du),
             static_cast<std::uint32_t>((seed_ >> 32) ^ 0xB5026F5Au)});
        const std::uint64_t id =
            (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
        return RngStream(seed_, id);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace smcvar
