#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dht/error.hpp"
#include "dht/quantizer.hpp"
#include "dht/simulate.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dht;
using testing::example_2x2;
using testing::to_grid;
using testing::to_pmf;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

JointPmf skewed_2x2() {
    Eigen::MatrixXd m(2, 2);
    m << 0.5, 0.1, 0.15, 0.25;
    return JointPmf(m);
}

}  // namespace

TEST_CASE("identity encoder tables equal P and its product model") {
    const JointPmf p = discretized_gaussian(0.6, 4, 3);
    const auto qm = quantized_model(p, Encoder::identity(4));
    const JointPmf q = product_model(p);
    for (std::size_t x = 0; x < 4; ++x)
        for (std::size_t y = 0; y < 3; ++y) {
            CHECK(qm.h0()[qm.cell(x, y)] == doctest::Approx(p(x, y)).epsilon(1e-15));
            CHECK(qm.h1()[qm.cell(x, y)] == doctest::Approx(q(x, y)).epsilon(1e-15));
        }
    CHECK(qm.mutual_information() == doctest::Approx(mutual_information(p)).epsilon(1e-12));
    CHECK(qm.max_abs_llr() == doctest::Approx(c_constant(p)).epsilon(1e-12));
}

TEST_CASE("constant encoder leaves no information") {
    const JointPmf p = example_2x2();
    CHECK(quantized_model(p, Encoder::constant(2, 2)).mutual_information() < 1e-15);
}

TEST_CASE("alternative table is the pushforward of the product model") {
    std::mt19937_64 gen(31);
    for (std::size_t l = 1; l <= 3; ++l) {
        const std::size_t nx = 3, ny = 2;
        const auto g = oracle::random_joint(gen, nx, ny);
        const JointPmf p = to_pmf(g);
        const auto px = oracle::row_sums(to_grid(p));
        const auto py = oracle::col_sums(to_grid(p));
        std::size_t domain = 1, yspace = 1;
        for (std::size_t i = 0; i < l; ++i) {
            domain *= nx;
            yspace *= ny;
        }
        std::vector<std::uint32_t> table(domain);
        for (auto& v : table) v = static_cast<std::uint32_t>(gen() % 4);
        const Encoder enc(nx, l, 4, table);
        const auto qm = quantized_model(p, enc);
        std::vector<double> h0(4 * yspace, 0.0), h1(4 * yspace, 0.0);
        for (std::size_t xb = 0; xb < domain; ++xb)
            for (std::size_t yb = 0; yb < yspace; ++yb) {
                double a = 1, b = 1;
                std::size_t rx = xb, ry = yb;
                for (std::size_t i = 0; i < l; ++i) {
                    const std::size_t x = rx % nx, y = ry % ny;
                    rx /= nx;
                    ry /= ny;
                    a *= p(x, y);
                    b *= px[x] * py[y];
                }
                h0[table[xb] * yspace + yb] += a;
                h1[table[xb] * yspace + yb] += b;
            }
        for (std::size_t c = 0; c < h0.size(); ++c) {
            CHECK(qm.h0()[c] == doctest::Approx(h0[c]).epsilon(1e-13));
            CHECK(qm.h1()[c] == doctest::Approx(h1[c]).epsilon(1e-13));
        }
    }
}

TEST_CASE("quantization never creates information") {
    std::mt19937_64 gen(77);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t nx = 2 + gen() % 4, ny = 2 + gen() % 4;
        const JointPmf p = to_pmf(oracle::random_joint(gen, nx, ny));
        const double mi = mutual_information(p);
        const std::size_t m = 1 + gen() % nx;
        std::vector<std::uint32_t> table(nx);
        for (auto& v : table) v = static_cast<std::uint32_t>(gen() % m);
        const auto qm = quantized_model(p, Encoder(nx, 1, m, table));
        CHECK(qm.mutual_information() <= mi + 1e-12);

        // Injective maps keep all of it.
        std::vector<std::uint32_t> perm(nx);
        for (std::size_t i = 0; i < nx; ++i) perm[i] = static_cast<std::uint32_t>(i);
        std::shuffle(perm.begin(), perm.end(), gen);
        const auto full = quantized_model(p, Encoder(nx, 1, nx, perm));
        CHECK(full.mutual_information() == doctest::Approx(mi).epsilon(1e-12));
        bool injective = true;
        for (std::size_t a = 0; a < nx; ++a)
            for (std::size_t b = a + 1; b < nx; ++b) injective &= table[a] != table[b];
        if (!injective) CHECK(qm.mutual_information() < mi);
    }
}

TEST_CASE("enumeration cap and block multiples") {
    const JointPmf p = discretized_gaussian(0.5, 40, 40);
    CHECK_THROWS_AS(quantized_model(p, Encoder::identity(40, 4)), DomainError);
    const auto qm = quantized_model(example_2x2(), Encoder::identity(2, 2));
    CHECK_THROWS_AS(estimate_errors(qm, 5, 0.0, 10, 1), DomainError);
    CHECK_THROWS_AS(calibrate_threshold(qm, 3, 0.1, 10, 1), DomainError);
    CHECK_NOTHROW(estimate_errors(qm, 6, 0.0, 10, 1));
}

TEST_CASE("degenerate thresholds") {
    const auto qm = quantized_model(example_2x2(), Encoder::identity(2));
    const auto accept_all = estimate_errors(qm, 10, -kInf, 2000, 3);
    CHECK(accept_all.type1_hat == 0.0);
    CHECK(accept_all.type2_hat == 1.0);
    const auto reject_all = estimate_errors(qm, 10, kInf, 2000, 3);
    CHECK(reject_all.type1_hat == 1.0);
    CHECK(reject_all.type2_hat == 0.0);
}

TEST_CASE("calibrated threshold matches the exact quantile") {
    const JointPmf p = skewed_2x2();
    const auto qm = quantized_model(p, Encoder::identity(2));
    // Exact: the largest statistic value whose lower tail mass is <= eps.
    const auto g = to_grid(p);
    const auto support = oracle::statistic_support(g, 1);
    double exact_t = -kInf;
    for (double s : support) {
        const auto e = oracle::exact_np(g, 1, s);
        if (e.type1 <= 0.25) exact_t = std::max(exact_t, s);
    }
    const auto cal = calibrate_threshold(qm, 1, 0.25, 20000, 5);
    CHECK(cal.t == doctest::Approx(exact_t).epsilon(1e-12));
    CHECK_FALSE(cal.saturated);
    CHECK(cal.empirical_type1 <= 0.25);

    const auto tiny = calibrate_threshold(qm, 1, 1e-6, 1000, 5);
    CHECK(tiny.saturated);
    CHECK(tiny.few_trials);

    // eps close to 1 keeps only the very top of the H0 sample in the
    // acceptance region.
    const auto wide = quantized_model(discretized_gaussian(0.4, 5, 5), Encoder::identity(5));
    const auto all = calibrate_threshold(wide, 20, 0.999999999, 1000, 5);
    CHECK(estimate_errors(wide, 20, all.t, 1000, 5).type2_hat == 0.0);
    CHECK_THROWS_AS(calibrate_threshold(qm, 1, 0.0, 100, 1), DomainError);
}

TEST_CASE("small case agrees with exhaustive enumeration") {
    const JointPmf p = skewed_2x2();
    const auto g = to_grid(p);
    const auto qm = quantized_model(p, Encoder::identity(2));
    for (std::size_t n : {1u, 2u, 3u}) {
        const auto support = oracle::statistic_support(g, n);
        const double t = 0.5 * (support.front() + support.back());
        const auto exact = oracle::exact_np(g, n, t);
        const auto r = estimate_errors(qm, n, t, 100000, 9, 1, 0.999);
        CHECK(r.type1_ci.contains(exact.type1));
        CHECK(r.type2_ci.contains(exact.type2));
    }
}

TEST_CASE("error estimates are monotone in the threshold") {
    const JointPmf p = discretized_gaussian(0.4, 5, 5);
    const auto qm = quantized_model(p, Encoder::identity(5));
    double prev1 = -1, prev2 = 2;
    for (double t = -0.3; t <= 0.6; t += 0.05) {
        const auto r = estimate_errors(qm, 20, t, 5000, 21);
        CHECK(r.type1_hat >= prev1);
        CHECK(r.type2_hat <= prev2);
        prev1 = r.type1_hat;
        prev2 = r.type2_hat;
    }
}

TEST_CASE("results do not depend on the worker count") {
    const JointPmf p = discretized_gaussian(0.5, 6, 6);
    const auto qm = quantized_model(p, lloyd_max(p, 3).encoder(2));
    std::vector<std::string> outs;
    for (unsigned w : {1u, 4u, 1u}) {
        const auto cal = calibrate_threshold(qm, 20, 0.1, 4000, 42, w);
        auto r = estimate_errors(qm, 20, cal.t, 6000, 42, w);
        r.eps_n = 0.1;
        std::ostringstream csv;
        write_sim_csv(csv, {r});
        outs.push_back(csv.str() + r.to_json().dump());
    }
    CHECK(outs[0] == outs[1]);
    CHECK(outs[0] == outs[2]);
    CHECK(outs[0].rfind("n,eps_n,t,type1_hat,type2_hat,ci_lo,ci_hi,seed\n20,0.1,", 0) == 0);
}

TEST_CASE("wilson intervals") {
    const auto iv = wilson_interval(30, 100);
    CHECK(iv.contains(0.3));
    CHECK(iv.lo == doctest::Approx(0.2189).epsilon(1e-3));
    CHECK(iv.hi == doctest::Approx(0.3958).epsilon(1e-3));
    const auto zero = wilson_interval(0, 1000);
    CHECK(zero.lo == 0.0);
    CHECK(zero.hi == doctest::Approx(-std::log(0.05) / 1000));
    const auto full = wilson_interval(1000, 1000);
    CHECK(full.hi == 1.0);
    CHECK(full.lo == doctest::Approx(1 + std::log(0.05) / 1000));
    CHECK(wilson_interval(30, 100, 0.99).half_width() > iv.half_width());
    CHECK_THROWS_AS(wilson_interval(1, 0), DomainError);
}

TEST_CASE("normal quantile") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK(std::abs(normal_quantile(0.975) - 1.959963984540054) < 1e-9);
    CHECK(std::abs(normal_quantile(0.1) + 1.2815515655446004) < 1e-9);
    CHECK(std::abs(normal_quantile(1e-10) + 6.361340902404056) < 1e-9);
    for (double p : {1e-6, 0.01, 0.2, 0.4, 0.7}) {
        CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1 - p)).epsilon(1e-9));
        CHECK(0.5 * std::erfc(-normal_quantile(p) / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK_THROWS(normal_quantile(0.0));
    CHECK_THROWS(normal_quantile(1.0));
}

TEST_CASE("centralized second-order approximation") {
    const JointPmf p = example_2x2();
    const double d = mutual_information(p);
    CHECK(centralized_second_order(p, 0.5, 100) == doctest::Approx(d + std::log(100.0) / 200.0).epsilon(1e-12));
    CHECK(centralized_second_order(p, 0.2, 1000000000) == doctest::Approx(d).epsilon(1e-3));

    const auto g = to_grid(p);
    std::vector<double> pv, qv;
    const auto px = oracle::row_sums(g), py = oracle::col_sums(g);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            pv.push_back(g[i][j]);
            qv.push_back(px[i] * py[j]);
        }
    const double expected =
        oracle::second_order(oracle::kl(pv, qv), oracle::divergence_variance(pv, qv), -1.2815515655446004, 400);
    CHECK(centralized_second_order(p, 0.1, 400) == doctest::Approx(expected).epsilon(1e-9));
    CHECK_THROWS_AS(centralized_second_order(p, 0.0, 10), DomainError);
    CHECK_THROWS_AS(centralized_second_order(p, 1.0, 10), DomainError);
}
