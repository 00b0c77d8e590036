#pragma once

// Block encoders f_l : X^l -> {0, ..., M-1}. A scalar quantizer applied to
// each coordinate of a block gives the blockwise composition used by the
// simulator.

#include <cstdint>
#include <span>
#include <vector>

#include "dht/dist.hpp"

namespace dht {

class Encoder {
public:
    /// Explicit table over X^l, indexed in mixed radix with x_1 as the most
    /// significant digit. Values must lie in [0, codebook_size).
    Encoder(std::size_t alphabet_x, std::size_t block_len, std::size_t codebook_size,
            std::vector<std::uint32_t> table);

    /// Applies `scalar` to each coordinate and packs the l cell indices.
    static Encoder blockwise(std::span<const std::uint32_t> scalar, std::size_t levels, std::size_t block_len);
    static Encoder identity(std::size_t alphabet_x, std::size_t block_len = 1);
    static Encoder constant(std::size_t alphabet_x, std::size_t block_len = 1);

    std::size_t alphabet_x() const { return alphabet_x_; }
    std::size_t block_len() const { return block_len_; }
    std::size_t codebook_size() const { return codebook_size_; }
    std::size_t domain_size() const { return table_.size(); }
    const std::vector<std::uint32_t>& table() const { return table_; }

    std::uint32_t operator()(std::span<const std::size_t> block) const;
    std::uint32_t operator()(std::size_t block_index) const { return table_[block_index]; }

    /// codebook_size <= floor(2^{l R}) for R in bits per sample.
    bool respects_rate(double rate_bits) const;

    bool levels_reduced = false;

private:
    std::size_t alphabet_x_;
    std::size_t block_len_;
    std::size_t codebook_size_;
    std::vector<std::uint32_t> table_;
};

/// Largest per-symbol codebook allowed by a rate of R bits per sample.
std::size_t levels_for_rate(double rate_bits);

struct ScalarQuantizer {
    std::vector<std::uint32_t> cell_of;   // per grid point
    std::vector<double> centroids;        // per cell
    std::vector<std::size_t> first_point; // first grid index of each cell
    double distortion = 0;                // mean squared error
    std::size_t iterations = 0;
    bool levels_reduced = false;

    Encoder encoder(std::size_t block_len = 1) const;
};

/// Lloyd-Max design of a contiguous-cell MSE quantizer on a discrete grid.
/// Points equidistant from two centroids go to the left cell.
ScalarQuantizer lloyd_max(std::span<const double> positions, std::span<const double> pmf, std::size_t levels,
                          double tol = 1e-12, std::size_t max_iters = 1000);

/// Convenience overload: X marginal and grid positions of a model.
ScalarQuantizer lloyd_max(const JointPmf& p, std::size_t levels, double tol = 1e-12, std::size_t max_iters = 1000);

}  // namespace dht
