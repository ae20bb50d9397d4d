#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace vortexlab {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Streams are keyed by (seed, stream id): the seed fills the 64-bit Philox
// key and the stream id occupies the upper half of the 128-bit counter.
// Draw n from stream s is a pure function of (seed, s, n), so ensemble
// sampling is independent of scheduling and thread count.
class Philox {
public:
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
            const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }
};

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    std::uint64_t next_u64() {
        if (buf_pos_ >= 2) refill();
        const std::uint64_t lo = out_[2 * buf_pos_];
        const std::uint64_t hi = out_[2 * buf_pos_ + 1];
        ++buf_pos_;
        return (hi << 32) | lo;
    }

    // Uniform on [0,1) with 53 random bits.
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1), for logs.
    double u01_open() {
        double u;
        do { u = u01(); } while (u == 0.0);
        return u;
    }

    double uniform(double a, double b) { return a + (b - a) * u01(); }

    std::uint64_t uniform_index(std::uint64_t n) {
        // multiply-shift; bias < 2^-64, irrelevant at our n
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Marsaglia polar method
        double u, v, s;
        do {
            u = 2.0 * u01() - 1.0;
            v = 2.0 * u01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // Inversion by multiplication (fine for the moderate rates used here).
    std::uint64_t poisson(double lambda) {
        const double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= u01_open();
        } while (p > limit);
        return k - 1;
    }

private:
    void refill() {
        const std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        out_ = Philox::block(ctr, key_);
        ++counter_;
        buf_pos_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> out_{};
    int buf_pos_ = 2;  // force refill on first use
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vortexlab
