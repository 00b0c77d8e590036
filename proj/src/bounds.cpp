#include "dht/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "dht/error.hpp"

namespace dht {

TypeIRegime TypeIRegime::constant(double eps) {
    if (!(eps > 0 && eps < 1)) throw DomainError(fmt::format("constant eps must lie in (0,1), got {}", eps));
    return {Kind::Constant, eps};
}

TypeIRegime TypeIRegime::logarithmic() { return {Kind::Logarithmic, 0.0}; }

TypeIRegime TypeIRegime::polynomial(double p) {
    if (!(p > 0)) throw DomainError(fmt::format("polynomial exponent must be positive, got {}", p));
    return {Kind::Polynomial, p};
}

TypeIRegime TypeIRegime::superpolynomial(double p) {
    if (!(p > 0 && p < 1))
        throw DomainError(fmt::format("superpolynomial exponent must lie in (0,1), got {}", p));
    return {Kind::Superpolynomial, p};
}

TypeIRegime TypeIRegime::parse(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    auto param = [&]() -> double {
        if (colon == std::string::npos) throw DomainError(fmt::format("regime '{}' needs a parameter", spec));
        try {
            std::size_t used = 0;
            const double v = std::stod(spec.substr(colon + 1), &used);
            if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::logic_error&) {
            throw DomainError(fmt::format("regime '{}' has a malformed parameter", spec));
        }
    };
    if (head == "const" || head == "constant") return constant(param());
    if (head == "log" || head == "logarithmic") {
        if (colon != std::string::npos) throw DomainError("logarithmic regime takes no parameter");
        return logarithmic();
    }
    if (head == "poly" || head == "polynomial") return polynomial(param());
    if (head == "superpoly" || head == "superpolynomial") return superpolynomial(param());
    throw DomainError(fmt::format("unknown regime '{}' (expected const:E, log, poly:P or superpoly:P)", spec));
}

std::string TypeIRegime::label() const {
    switch (kind_) {
        case Kind::Constant: return fmt::format("const:{}", param_);
        case Kind::Logarithmic: return "log";
        case Kind::Polynomial: return fmt::format("poly:{}", param_);
        case Kind::Superpolynomial: return fmt::format("superpoly:{}", param_);
    }
    return {};
}

std::size_t TypeIRegime::min_n() const { return kind_ == Kind::Logarithmic ? 3 : 2; }

double eps_at(const TypeIRegime& regime, std::size_t n) {
    const double nd = static_cast<double>(n);
    switch (regime.kind()) {
        case TypeIRegime::Kind::Constant: return regime.param();
        case TypeIRegime::Kind::Logarithmic:
            if (n < 3) throw DomainError(fmt::format("1/log(n) is not below 1 for n = {} (need n >= 3)", n));
            return 1.0 / std::log(nd);
        case TypeIRegime::Kind::Polynomial: return std::pow(nd, -regime.param());
        case TypeIRegime::Kind::Superpolynomial: return std::exp(-std::pow(nd, regime.param()));
    }
    return 0;
}

double log_inv_eps(const TypeIRegime& regime, std::size_t n) {
    const double nd = static_cast<double>(n);
    switch (regime.kind()) {
        case TypeIRegime::Kind::Constant: return -std::log(regime.param());
        case TypeIRegime::Kind::Logarithmic:
            if (n < 3) throw DomainError(fmt::format("1/log(n) is not below 1 for n = {} (need n >= 3)", n));
            return std::log(std::log(nd));
        case TypeIRegime::Kind::Polynomial: return regime.param() * std::log(nd);
        case TypeIRegime::Kind::Superpolynomial: return std::pow(nd, regime.param());
    }
    return 0;
}

std::size_t gap_min_n(const TypeIRegime& regime) {
    switch (regime.kind()) {
        case TypeIRegime::Kind::Constant:
            throw DomainError("gap bounds do not cover the constant regime; use feasibility_interval");
        case TypeIRegime::Kind::Logarithmic: return 3;
        default: return 2;
    }
}

GapBounds gap_bounds(const TypeIRegime& regime, std::size_t n, double d_slope, double c) {
    if (!(c > 0)) throw DomainError("c must be positive");
    const std::size_t need = gap_min_n(regime);
    if (n < need)
        throw DomainError(fmt::format("gap bounds for {} need n >= {}, got {}", regime.label(), need, n));

    const double nd = static_cast<double>(n);
    const double ln = std::log(nd);
    const double p = regime.param();
    const double sqrt2 = std::sqrt(2.0);
    GapBounds g;
    switch (regime.kind()) {
        case TypeIRegime::Kind::Logarithmic: {
            const double lnln = std::log(ln);
            g.lower = (d_slope / 6.0 - std::sqrt(2.0 * lnln) * c / ln) * (ln / std::cbrt(nd));
            g.upper = (16.0 * c + lnln * std::sqrt(ln) / nd) / std::sqrt(ln);
            break;
        }
        case TypeIRegime::Kind::Polynomial: {
            g.lower = (d_slope / 6.0 - std::sqrt(2.0 * p * ln) * c / ln) * (ln / std::cbrt(nd));
            if (p < 2.0) {
                g.upper = (16.0 * c + p * ln / std::pow(nd, 1.0 - p / 2.0)) / std::pow(nd, p / 2.0);
            } else {
                g.upper = (8.0 * sqrt2 * c * std::sqrt(std::pow(nd, 2.0 - p) + 1.0) / ln + 2.0) * (ln / nd);
            }
            break;
        }
        case TypeIRegime::Kind::Superpolynomial: {
            g.lower = ((1.0 - p) / 6.0 * d_slope - sqrt2 * c / ln) * (ln / std::pow(nd, (1.0 - p) / 3.0));
            // e^{-n^p} n^2 computed in log space.
            const double tail = std::exp(2.0 * ln - std::pow(nd, p));
            g.upper = (8.0 * sqrt2 * c * std::sqrt(tail + 1.0) / ln + 2.0) * (ln / nd);
            break;
        }
        case TypeIRegime::Kind::Constant: break;
    }
    return g;
}

std::size_t select_block_length(const TypeIRegime& regime, std::size_t n) {
    if (n <= 1) return 1;
    const double alpha =
        regime.kind() == TypeIRegime::Kind::Superpolynomial ? (1.0 - regime.param()) / 3.0 : 1.0 / 3.0;
    const double v = std::pow(static_cast<double>(n), alpha);
    const double nearest = std::round(v);
    // Exact powers (1000^(1/3), 64^(1/6)) must not round up past the integer.
    const double l = std::abs(v - nearest) <= 1e-9 * std::max(1.0, v) ? nearest : std::ceil(v);
    return std::max<std::size_t>(1, static_cast<std::size_t>(l));
}

SlackChoice select_h(const TypeIRegime& regime, std::size_t n) {
    if (n < 2) throw DomainError("select_h needs n >= 2");
    const double eps = eps_at(regime, n);
    SlackChoice out;
    switch (regime.kind()) {
        case TypeIRegime::Kind::Constant:
        case TypeIRegime::Kind::Logarithmic: out.regime_one = true; break;
        case TypeIRegime::Kind::Polynomial: out.regime_one = regime.param() < 2.0; break;
        case TypeIRegime::Kind::Superpolynomial: out.regime_one = false; break;
    }
    const double nd = static_cast<double>(n);
    out.h = out.regime_one ? eps : 1.0 / (nd * nd);
    out.valid_lb = 1.0 - eps - out.h > 0;
    return out;
}

double implied_s(double eps, double h, double c) {
    const double slack = 1.0 - eps - h;
    if (!(slack > 0)) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(32.0 * c * c * -std::log(slack));
}

double BoundReport::log_interval_length() const {
    if (!valid_lb || !(log_lb > -std::numeric_limits<double>::infinity())) return log_ub;
    if (log_lb >= log_ub) return -std::numeric_limits<double>::infinity();
    return log_ub + std::log1p(-std::exp(log_lb - log_ub));
}

BoundReport feasibility_interval(const OperatingPoint& pt, double c, const TypeIRegime& regime, std::size_t n) {
    if (!(pt.xi > 0)) throw DomainError("xi must be positive");
    if (!(c > 0)) throw DomainError("c must be positive");
    if (n < regime.min_n())
        throw DomainError(fmt::format("{} needs n >= {}, got {}", regime.label(), regime.min_n(), n));

    const double nd = static_cast<double>(n);
    BoundReport r;
    r.n = n;
    r.eps_n = eps_at(regime, n);
    const double lie = log_inv_eps(regime, n);
    r.block_l = select_block_length(regime, n);
    const auto slack = select_h(regime, n);
    r.h_n = slack.h;
    r.valid_lb = slack.valid_lb;

    const double l = static_cast<double>(r.block_l);
    r.delta_tilde = std::sqrt(2.0 * l * lie / nd) * c;
    r.log_ub = -nd * (pt.xi + pt.d_slope * std::log(l) / (2.0 * l) - r.delta_tilde);
    r.log_nominal = -nd * pt.xi;
    if (r.valid_lb) {
        const double penalty = -std::log1p(-(r.eps_n + r.h_n));
        r.s_n = implied_s(r.eps_n, r.h_n, c);
        r.log_lb = -nd * (pt.xi + 4.0 * c * std::sqrt(2.0 * penalty) + std::log(1.0 / r.h_n) / nd);
    } else {
        r.s_n = std::numeric_limits<double>::quiet_NaN();
        r.log_lb = -std::numeric_limits<double>::infinity();
    }
    r.ub_prob = std::clamp(std::exp(r.log_ub), 0.0, 1.0);
    r.lb_prob = r.valid_lb ? std::clamp(std::exp(r.log_lb), 0.0, 1.0) : 0.0;
    r.nominal = std::exp(r.log_nominal);

    if (regime.kind() != TypeIRegime::Kind::Constant && n >= gap_min_n(regime)) {
        const auto g = gap_bounds(regime, n, pt.d_slope, c);
        r.gap_lower = g.lower;
        r.gap_upper = g.upper;
    }
    return r;
}

CnsResult critical_sample_size(const OperatingPoint& pt, double c, const TypeIRegime& regime, double delta,
                               std::size_t cap, bool keep_trace) {
    if (!(delta > 0)) throw DomainError("delta must be positive");
    if (cap < 1) throw DomainError("cap must be at least 1");
    CnsResult out;
    out.delta = delta;
    out.cap = cap;
    for (std::size_t n = 1; n <= cap; ++n) {
        BoundReport rep;
        try {
            rep = feasibility_interval(pt, c, regime, n);
        } catch (const DomainError&) {
            continue;
        }
        const double worst = std::max(rep.ub_prob - rep.nominal, rep.nominal - rep.lb_prob);
        if (keep_trace) out.trace.push_back(rep);
        if (worst <= delta) {
            out.cns = n;
            break;
        }
    }
    return out;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : "nan"; }

}  // namespace

void write_bounds_csv(std::ostream& out, const std::vector<BoundReport>& rows) {
    out << "n,eps_n,l,h_n,delta_tilde,lb_prob,nominal,ub_prob,gap_lower,gap_upper,valid_lb\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.n, r.eps_n, r.block_l, r.h_n, r.delta_tilde,
                           r.lb_prob, r.nominal, r.ub_prob, opt(r.gap_lower), opt(r.gap_upper),
                           r.valid_lb ? 1 : 0);
    }
}

void write_cns_csv(std::ostream& out, const std::vector<CnsRow>& rows) {
    out << "regime,delta,cns\n";
    for (const auto& row : rows) {
        out << fmt::format("{},{},{}\n", row.regime.label(), row.result.delta,
                           row.result.cns ? std::to_string(*row.result.cns) : std::string("none"));
    }
}

}  // namespace dht
