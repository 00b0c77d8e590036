#include "dht/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "dht/error.hpp"

namespace dht {

namespace {

std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t out = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (base != 0 && out > std::numeric_limits<std::uint32_t>::max() / base)
            throw DomainError("encoder domain too large for an explicit table");
        out *= base;
    }
    return out;
}

}  // namespace

Encoder::Encoder(std::size_t alphabet_x, std::size_t block_len, std::size_t codebook_size,
                 std::vector<std::uint32_t> table)
    : alphabet_x_(alphabet_x), block_len_(block_len), codebook_size_(codebook_size), table_(std::move(table)) {
    if (alphabet_x == 0 || block_len == 0 || codebook_size == 0)
        throw DomainError("encoder dimensions must be positive");
    if (table_.size() != ipow(alphabet_x, block_len))
        throw DomainError(fmt::format("encoder table has {} entries, expected |X|^l = {}", table_.size(),
                                      ipow(alphabet_x, block_len)));
    for (std::size_t i = 0; i < table_.size(); ++i)
        if (table_[i] >= codebook_size)
            throw DomainError(fmt::format("encoder maps block {} to {} outside codebook of size {}", i, table_[i],
                                          codebook_size));
}

Encoder Encoder::blockwise(std::span<const std::uint32_t> scalar, std::size_t levels, std::size_t block_len) {
    const std::size_t nx = scalar.size();
    const std::size_t domain = ipow(nx, block_len);
    const std::size_t codebook = ipow(levels, block_len);
    std::vector<std::uint32_t> table(domain);
    for (std::size_t idx = 0; idx < domain; ++idx) {
        std::size_t rest = idx;
        std::size_t code = 0;
        std::size_t weight = 1;
        for (std::size_t pos = 0; pos < block_len; ++pos) {
            // least significant digit first
            code += scalar[rest % nx] * weight;
            rest /= nx;
            weight *= levels;
        }
        table[idx] = static_cast<std::uint32_t>(code);
    }
    return Encoder(nx, block_len, codebook, std::move(table));
}

Encoder Encoder::identity(std::size_t alphabet_x, std::size_t block_len) {
    std::vector<std::uint32_t> scalar(alphabet_x);
    for (std::size_t i = 0; i < alphabet_x; ++i) scalar[i] = static_cast<std::uint32_t>(i);
    return blockwise(scalar, alphabet_x, block_len);
}

Encoder Encoder::constant(std::size_t alphabet_x, std::size_t block_len) {
    return Encoder(alphabet_x, block_len, 1, std::vector<std::uint32_t>(ipow(alphabet_x, block_len), 0));
}

std::uint32_t Encoder::operator()(std::span<const std::size_t> block) const {
    if (block.size() != block_len_) throw DomainError("block has the wrong length");
    std::size_t idx = 0;
    for (std::size_t x : block) idx = idx * alphabet_x_ + x;
    return table_[idx];
}

bool Encoder::respects_rate(double rate_bits) const {
    const double budget = std::floor(std::exp2(static_cast<double>(block_len_) * rate_bits) + 1e-9);
    return static_cast<double>(codebook_size_) <= budget;
}

std::size_t levels_for_rate(double rate_bits) {
    if (!(rate_bits >= 0)) throw DomainError("rate must be nonnegative");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::exp2(rate_bits) + 1e-9)));
}

Encoder ScalarQuantizer::encoder(std::size_t block_len) const {
    Encoder e = Encoder::blockwise(cell_of, centroids.size(), block_len);
    e.levels_reduced = levels_reduced;
    return e;
}

ScalarQuantizer lloyd_max(std::span<const double> positions, std::span<const double> pmf, std::size_t levels,
                          double tol, std::size_t max_iters) {
    const std::size_t n = positions.size();
    if (n == 0 || pmf.size() != n) throw DomainError("grid positions and pmf must be non-empty and equal length");
    if (levels == 0) throw DomainError("levels must be at least 1");
    for (std::size_t i = 1; i < n; ++i)
        if (!(positions[i] > positions[i - 1])) throw DomainError("grid positions must be strictly increasing");

    ScalarQuantizer q;
    if (levels > n) {
        levels = n;
        q.levels_reduced = true;
    }

    // Equal-count contiguous start.
    std::vector<std::uint32_t> cell(n);
    for (std::size_t i = 0; i < n; ++i) cell[i] = static_cast<std::uint32_t>(i * levels / n);

    std::vector<double> centroid(levels, 0.0);
    auto update_centroids = [&] {
        std::vector<double> mass(levels, 0.0), moment(levels, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            mass[cell[i]] += pmf[i];
            moment[cell[i]] += pmf[i] * positions[i];
        }
        for (std::size_t k = 0; k < levels; ++k)
            if (mass[k] > 0) centroid[k] = moment[k] / mass[k];
    };
    auto distortion = [&] {
        double d = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = positions[i] - centroid[cell[i]];
            d += pmf[i] * e * e;
        }
        return d;
    };

    update_centroids();
    double prev = distortion();
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t best = 0;
            double best_d = std::abs(positions[i] - centroid[0]);
            for (std::size_t k = 1; k < levels; ++k) {
                const double d = std::abs(positions[i] - centroid[k]);
                if (d < best_d) {  // strict: ties stay with the left cell
                    best_d = d;
                    best = static_cast<std::uint32_t>(k);
                }
            }
            if (best != cell[i]) {
                cell[i] = best;
                changed = true;
            }
        }
        update_centroids();
        const double cur = distortion();
        if (!changed || std::abs(prev - cur) < tol) {
            prev = cur;
            ++it;
            break;
        }
        prev = cur;
    }

    // Drop cells that lost all their points and renumber left to right.
    std::vector<std::int64_t> remap(levels, -1);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (remap[cell[i]] < 0) {
            remap[cell[i]] = next++;
            q.centroids.push_back(centroid[cell[i]]);
            q.first_point.push_back(i);
        }
        cell[i] = static_cast<std::uint32_t>(remap[cell[i]]);
    }
    if (next < levels) q.levels_reduced = true;
    q.cell_of = std::move(cell);
    q.distortion = prev;
    q.iterations = it;
    return q;
}

ScalarQuantizer lloyd_max(const JointPmf& p, std::size_t levels, double tol, std::size_t max_iters) {
    std::vector<double> pos;
    if (p.x_alphabet().has_positions()) {
        pos = p.x_alphabet().positions;
    } else {
        pos.resize(p.nx());
        for (std::size_t i = 0; i < p.nx(); ++i) pos[i] = static_cast<double>(i);
    }
    std::vector<double> pmf(p.px().data(), p.px().data() + p.nx());
    return lloyd_max(pos, pmf, levels, tol, max_iters);
}

}  // namespace dht
