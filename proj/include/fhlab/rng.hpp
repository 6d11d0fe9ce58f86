#pragma once

// Counter-based random streams.
//
// Philox4x32-10 (Salmon et al., SC'11). A stream is identified by
//   key     = master seed (64 bits, split into two 32-bit words)
//   counter = [block_lo, block_hi, stream_lo, stream_hi]
// where stream = (trajectory_index << 8) | channel and block counts
// 128-bit output blocks drawn so far. Two streams with different
// (seed, trajectory_index, channel) never share a counter value, so the
// draws of one trajectory never depend on how many workers ran before it.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fhlab {

class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            ctr = single_round(ctr, key);
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter single_round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

namespace channel {
inline constexpr std::uint32_t spde_noise = 0;
inline constexpr std::uint32_t linear_extra = 1;
inline constexpr std::uint32_t linear_all = 2;
inline constexpr std::uint32_t zrp = 3;
inline constexpr std::uint32_t test = 255;
}  // namespace channel

class RandomStream {
public:
    RandomStream(std::uint64_t master_seed, std::uint64_t trajectory_index, std::uint32_t chan)
        : key_{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32)} {
        const std::uint64_t stream = (trajectory_index << 8) | chan;
        stream_lo_ = static_cast<std::uint32_t>(stream);
        stream_hi_ = static_cast<std::uint32_t>(stream >> 32);
    }

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal by Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phase = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(phase);
        has_spare_ = true;
        return r * std::cos(phase);
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

private:
    void refill() {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                      stream_lo_, stream_hi_};
        buf_ = Philox4x32::block(ctr, key_);
        ++block_;
        pos_ = 0;
    }

    Philox4x32::Key key_;
    std::uint32_t stream_lo_ = 0;
    std::uint32_t stream_hi_ = 0;
    std::uint64_t block_ = 0;
    Philox4x32::Counter buf_{};
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fhlab
