#pragma once

#include <Eigen/Dense>

#include "dht/bottleneck.hpp"
#include "dht/dist.hpp"
#include "oracles.hpp"

namespace testing {

inline dht::JointPmf to_pmf(const oracle::Grid& g) {
    Eigen::MatrixXd m(g.size(), g[0].size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g[i].size(); ++j) m(i, j) = g[i][j];
    m /= m.sum();
    return dht::JointPmf(m);
}

inline oracle::Grid to_grid(const dht::JointPmf& p) {
    oracle::Grid g(p.nx(), std::vector<double>(p.ny()));
    for (std::size_t i = 0; i < p.nx(); ++i)
        for (std::size_t j = 0; j < p.ny(); ++j) g[i][j] = p(i, j);
    return g;
}

inline oracle::Grid channel_grid(const dht::TestChannel& ch) {
    oracle::Grid g(ch.nx(), std::vector<double>(ch.nu()));
    for (std::size_t x = 0; x < ch.nx(); ++x)
        for (std::size_t u = 0; u < ch.nu(); ++u) g[x][u] = ch.matrix()(x, u);
    return g;
}

inline dht::JointPmf example_2x2() {
    Eigen::MatrixXd m(2, 2);
    m << 0.4, 0.1, 0.1, 0.4;
    return dht::JointPmf(m);
}

}  // namespace testing
