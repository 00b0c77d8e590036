#include "dht/dist.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "dht/error.hpp"

namespace dht {

Alphabet Alphabet::indexed(std::size_t n) {
    Alphabet a;
    a.names.reserve(n);
    for (std::size_t i = 0; i < n; ++i) a.names.push_back(std::to_string(i));
    return a;
}

Alphabet Alphabet::from_positions(std::vector<double> positions) {
    Alphabet a;
    a.names.reserve(positions.size());
    for (double v : positions) a.names.push_back(fmt::format("{}", v));
    a.positions = std::move(positions);
    return a;
}

JointPmf::JointPmf(Eigen::MatrixXd probs, Alphabet x, Alphabet y)
    : probs_(std::move(probs)), x_(std::move(x)), y_(std::move(y)) {
    if (probs_.rows() == 0 || probs_.cols() == 0)
        throw InvalidDistribution("joint pmf must have at least one cell");
    if (x_.size() == 0) x_ = Alphabet::indexed(nx());
    if (y_.size() == 0) y_ = Alphabet::indexed(ny());
    if (x_.size() != nx() || y_.size() != ny())
        throw InvalidDistribution(fmt::format("label counts ({}, {}) do not match shape {}x{}",
                                              x_.size(), y_.size(), nx(), ny()));
    if ((x_.has_positions() && x_.positions.size() != nx()) ||
        (y_.has_positions() && y_.positions.size() != ny()))
        throw InvalidDistribution("grid positions do not match alphabet size");

    double total = 0;
    for (Eigen::Index i = 0; i < probs_.rows(); ++i) {
        for (Eigen::Index j = 0; j < probs_.cols(); ++j) {
            const double v = probs_(i, j);
            if (!std::isfinite(v) || v < 0)
                throw InvalidDistribution(fmt::format("cell ({}, {}) is negative or not finite: {}", i, j, v));
            if (v == 0)
                throw InvalidDistribution(
                    fmt::format("cell ({}, {}) has zero mass; full support is required", i, j));
            total += v;
        }
    }
    if (std::abs(total - 1.0) > kProbTol)
        throw InvalidDistribution(fmt::format("entries sum to {:.17g}, expected 1", total));

    px_ = probs_.rowwise().sum();
    py_ = probs_.colwise().sum().transpose();
}

double JointPmf::entropy_x() const { return entropy({px_.data(), nx()}); }
double JointPmf::entropy_y() const { return entropy({py_.data(), ny()}); }

Eigen::MatrixXd JointPmf::conditional_y_given_x() const {
    return px_.cwiseInverse().asDiagonal() * probs_;
}

std::uint64_t JointPmf::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t word) {
        for (int b = 0; b < 8; ++b) {
            h ^= (word >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    };
    mix(nx());
    mix(ny());
    for (Eigen::Index i = 0; i < probs_.rows(); ++i) {
        for (Eigen::Index j = 0; j < probs_.cols(); ++j) {
            std::uint64_t bits;
            const double v = probs_(i, j);
            std::memcpy(&bits, &v, sizeof bits);
            mix(bits);
        }
    }
    return h;
}

std::string JointPmf::fingerprint_hex() const { return fmt::format("{:016x}", fingerprint()); }

namespace {

nlohmann::json labels_to_json(const Alphabet& a) {
    auto out = nlohmann::json::array();
    if (a.has_positions()) {
        for (double v : a.positions) out.push_back(v);
    } else {
        for (const auto& s : a.names) out.push_back(s);
    }
    return out;
}

Alphabet labels_from_json(const nlohmann::json& j, const char* which) {
    if (!j.is_array()) throw InvalidDistribution(fmt::format("'{}' must be an array", which));
    bool numeric = !j.empty();
    for (const auto& v : j) numeric = numeric && v.is_number();
    if (numeric) {
        std::vector<double> pos;
        for (const auto& v : j) pos.push_back(v.get<double>());
        return Alphabet::from_positions(std::move(pos));
    }
    Alphabet a;
    for (const auto& v : j) a.names.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    return a;
}

}  // namespace

nlohmann::json JointPmf::to_json() const {
    nlohmann::json j;
    j["x_labels"] = labels_to_json(x_);
    j["y_labels"] = labels_to_json(y_);
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < probs_.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < probs_.cols(); ++k) row.push_back(probs_(i, k));
        rows.push_back(std::move(row));
    }
    j["probs"] = std::move(rows);
    return j;
}

JointPmf JointPmf::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("probs"))
        throw InvalidDistribution("model JSON must be an object with a 'probs' matrix");
    const auto& rows = j.at("probs");
    if (!rows.is_array() || rows.empty() || !rows[0].is_array())
        throw InvalidDistribution("'probs' must be a non-empty array of rows");
    const std::size_t nx = rows.size();
    const std::size_t ny = rows[0].size();
    Eigen::MatrixXd m(nx, ny);
    for (std::size_t i = 0; i < nx; ++i) {
        if (!rows[i].is_array() || rows[i].size() != ny)
            throw InvalidDistribution(fmt::format("row {} has {} entries, expected {}", i,
                                                  rows[i].is_array() ? rows[i].size() : 0, ny));
        for (std::size_t k = 0; k < ny; ++k) {
            if (!rows[i][k].is_number())
                throw InvalidDistribution(fmt::format("cell ({}, {}) is not a number", i, k));
            m(i, k) = rows[i][k].get<double>();
        }
    }
    Alphabet x = j.contains("x_labels") ? labels_from_json(j["x_labels"], "x_labels") : Alphabet{};
    Alphabet y = j.contains("y_labels") ? labels_from_json(j["y_labels"], "y_labels") : Alphabet{};
    return JointPmf(std::move(m), std::move(x), std::move(y));
}

double entropy(std::span<const double> pmf) {
    double h = 0;
    for (double v : pmf)
        if (v > 0) h -= v * std::log(v);
    return h;
}

JointPmf product_model(const JointPmf& p) {
    Eigen::MatrixXd q = p.px() * p.py().transpose();
    // Renormalize so the product of two rounded marginals still passes the
    // 1e-12 sum check on large alphabets.
    q /= q.sum();
    return JointPmf(std::move(q), p.x_alphabet(), p.y_alphabet());
}

double mutual_information(const JointPmf& p) {
    double mi = 0;
    for (std::size_t x = 0; x < p.nx(); ++x)
        for (std::size_t y = 0; y < p.ny(); ++y) {
            const double v = p(x, y);
            mi += v * std::log(v / (p.px()(x) * p.py()(y)));
        }
    return std::max(0.0, mi);
}

double c_constant(const JointPmf& p) {
    double c = 0;
    for (std::size_t x = 0; x < p.nx(); ++x)
        for (std::size_t y = 0; y < p.ny(); ++y)
            c = std::max(c, std::abs(std::log(p(x, y) / (p.px()(x) * p.py()(y)))));
    return c;
}

namespace {

void check_pair(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw AlphabetMismatch(fmt::format("alphabet sizes differ: {} vs {}", p.size(), q.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] > 0) || !(q[i] > 0))
            throw InvalidDistribution(fmt::format("symbol {} has zero mass; full support is required", i));
    }
}

void check_same_alphabet(const JointPmf& p, const JointPmf& q) {
    if (p.nx() != q.nx() || p.ny() != q.ny())
        throw AlphabetMismatch(fmt::format("shapes differ: {}x{} vs {}x{}", p.nx(), p.ny(), q.nx(), q.ny()));
    if (!(p.x_alphabet().names == q.x_alphabet().names) || !(p.y_alphabet().names == q.y_alphabet().names))
        throw AlphabetMismatch("alphabet labels differ");
}

std::span<const double> cells(const JointPmf& p) {
    return {p.probs().data(), static_cast<std::size_t>(p.probs().size())};
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    check_pair(p, q);
    double d = 0;
    for (std::size_t i = 0; i < p.size(); ++i) d += p[i] * std::log(p[i] / q[i]);
    return std::max(0.0, d);
}

double kl_divergence(const JointPmf& p, const JointPmf& q) {
    check_same_alphabet(p, q);
    return kl_divergence(cells(p), cells(q));
}

double divergence_variance(std::span<const double> p, std::span<const double> q) {
    check_pair(p, q);
    double d = 0;
    for (std::size_t i = 0; i < p.size(); ++i) d += p[i] * std::log(p[i] / q[i]);
    double v = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double dev = std::log(p[i] / q[i]) - d;
        v += p[i] * dev * dev;
    }
    return v;
}

double divergence_variance(const JointPmf& p, const JointPmf& q) {
    check_same_alphabet(p, q);
    return divergence_variance(cells(p), cells(q));
}

DivergenceStats divergence_stats(const JointPmf& p) {
    const JointPmf q = product_model(p);
    DivergenceStats s;
    s.mi = mutual_information(p);
    s.kl = s.mi;
    s.var_div = divergence_variance(p, q);
    s.c_const = c_constant(p);
    return s;
}

JointPmf discretized_gaussian(double correlation, std::size_t nx, std::size_t ny, double span_sigmas) {
    if (nx < 2 || ny < 2) throw DomainError(fmt::format("grid must be at least 2x2, got {}x{}", nx, ny));
    if (!(span_sigmas > 0)) throw DomainError("span_sigmas must be positive");
    if (!(correlation > -1 && correlation < 1)) throw DomainError("correlation must lie in (-1, 1)");

    auto grid = [span_sigmas](std::size_t n) {
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i)
            g[i] = -span_sigmas + 2.0 * span_sigmas * static_cast<double>(i) / static_cast<double>(n - 1);
        return g;
    };
    const auto gx = grid(nx);
    const auto gy = grid(ny);
    const double one_minus = 1.0 - correlation * correlation;

    Eigen::MatrixXd logd(nx, ny);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) {
            const double x = gx[i], y = gy[j];
            logd(i, j) = -(x * x - 2.0 * correlation * x * y + y * y) / (2.0 * one_minus);
        }
    const double top = logd.maxCoeff();
    // Scalar exp: the vectorized one clamps its argument instead of underflowing.
    Eigen::MatrixXd m(nx, ny);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (!((m(i, j) = std::exp(logd(i, j) - top)) >= std::numeric_limits<double>::min()))
                throw InvalidDistribution(fmt::format(
                    "correlation {} is degenerate on this grid: cell ({}, {}) underflows", correlation, i, j));
    m /= m.sum();
    return JointPmf(std::move(m), Alphabet::from_positions(gx), Alphabet::from_positions(gy));
}

Calibration calibrate_correlation(double target_mi, std::size_t nx, std::size_t ny, double span_sigmas) {
    if (target_mi < 0) throw DomainError("target mutual information must be nonnegative");
    const double cap = std::log(static_cast<double>(std::min(nx, ny)));
    if (target_mi >= cap)
        throw UnreachableTarget(fmt::format(
            "target {} nats is not below the discrete cap log(min(nx, ny)) = {} nats", target_mi, cap));
    if (target_mi == 0) return {0.0, discretized_gaussian(0.0, nx, ny, span_sigmas)};

    // Largest correlation that still has full support; MI is increasing in |rho|.
    double lo = 0.0;
    double hi = 0.0;
    double hi_mi = 0.0;
    for (int k = 1; k <= 60; ++k) {
        const double rho = 1.0 - std::pow(2.0, -k);
        try {
            const double mi = mutual_information(discretized_gaussian(rho, nx, ny, span_sigmas));
            hi = rho;
            hi_mi = mi;
            if (mi >= target_mi) break;
        } catch (const InvalidDistribution&) {
            double bad = rho;
            for (int it = 0; it < 60 && bad - hi > 1e-15; ++it) {
                const double mid = 0.5 * (hi + bad);
                try {
                    const double mi = mutual_information(discretized_gaussian(mid, nx, ny, span_sigmas));
                    hi = mid;
                    hi_mi = mi;
                    if (mi >= target_mi) break;
                } catch (const InvalidDistribution&) {
                    bad = mid;
                }
            }
            break;
        }
    }
    if (hi_mi < target_mi)
        throw UnreachableTarget(fmt::format(
            "target {} nats not reached on a {}x{} grid before cells underflow "
            "(last full-support value {} nats; discrete cap {} nats)",
            target_mi, nx, ny, hi_mi, cap));

    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double mi = mutual_information(discretized_gaussian(mid, nx, ny, span_sigmas));
        if (std::abs(mi - target_mi) <= 1e-10) {
            lo = hi = mid;
            break;
        }
        (mi < target_mi ? lo : hi) = mid;
    }
    const double rho = 0.5 * (lo + hi);
    JointPmf model = discretized_gaussian(rho, nx, ny, span_sigmas);
    const double achieved = mutual_information(model);
    if (std::abs(achieved - target_mi) > 1e-6)
        throw UnreachableTarget(fmt::format("bisection stalled at {} nats (target {})", achieved, target_mi));
    return {rho, std::move(model)};
}

}  // namespace dht
