#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, stream, trial, draw index), so results never depend on how trials
// are scheduled across threads.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace dht {

/// Philox4x32-10 (Salmon et al., SC'11).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit Philox4x32(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    Counter operator()(Counter ctr) const {
        Key key = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }

private:
    static Counter single_round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
        const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    Key key_;
};

/// One independent random stream, addressed by (seed, stream id, trial index).
class TrialStream {
public:
    TrialStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t trial)
        : gen_(seed), trial_(trial), stream_(stream) {}

    /// Four fresh 32-bit words.
    Philox4x32::Counter next_block() {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(trial_),
                                      static_cast<std::uint32_t>(trial_ >> 32), stream_,
                                      draw_++};
        return gen_(ctr);
    }

    double uniform() {
        const auto w = next_block();
        return to_unit(w[0], w[1]);
    }

    /// Uniform in [0,1) with 53 bits of resolution.
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = (std::uint64_t{hi} << 32) | lo;
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

private:
    Philox4x32 gen_;
    std::uint64_t trial_;
    std::uint32_t stream_;
    std::uint32_t draw_ = 0;
};

/// Walker/Vose alias table for O(1) draws from a finite pmf.
class AliasTable {
public:
    AliasTable() = default;
    explicit AliasTable(std::span<const double> weights);

    std::size_t size() const { return prob_.size(); }

    std::size_t sample(TrialStream& rng) const {
        const auto w = rng.next_block();
        const std::uint64_t bits = (std::uint64_t{w[0]} << 32) | w[1];
        const auto column = static_cast<std::size_t>(
            (static_cast<unsigned __int128>(bits) * prob_.size()) >> 64);
        const double coin = TrialStream::to_unit(w[2], w[3]);
        return coin < prob_[column] ? column : alias_[column];
    }

private:
    std::vector<double> prob_;
    std::vector<std::size_t> alias_;
};

/// Mixes a master seed with a task index into an independent child seed
/// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace dht
