#pragma once

// Finite-length bounds on the optimal Type II error beta_n(eps_n, R) of
// testing against independence under a rate constraint. All o(1) residuals
// of the asymptotic expansions are dropped when evaluating.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dht {

/// Decay law of the Type I budget eps_n.
class TypeIRegime {
public:
    enum class Kind { Constant, Logarithmic, Polynomial, Superpolynomial };

    static TypeIRegime constant(double eps);
    static TypeIRegime logarithmic();
    static TypeIRegime polynomial(double p);
    static TypeIRegime superpolynomial(double p);

    /// Parses "const:0.1", "log", "poly:0.5" or "superpoly:0.5".
    static TypeIRegime parse(const std::string& spec);
    std::string label() const;

    Kind kind() const { return kind_; }
    double param() const { return param_; }

    /// Smallest n for which eps_n is defined and below 1 (or, for the
    /// constant regime, n = 1).
    std::size_t min_n() const;

    bool operator==(const TypeIRegime&) const = default;

private:
    TypeIRegime(Kind k, double param) : kind_(k), param_(param) {}
    Kind kind_;
    double param_;
};

double eps_at(const TypeIRegime& regime, std::size_t n);

/// ln(1/eps_n), exact even where eps_n underflows.
double log_inv_eps(const TypeIRegime& regime, std::size_t n);

struct GapBounds {
    double lower = 0;
    double upper = 0;
};

/// Bounds on -(1/n) log beta_n - xi(R) for the regime's case. Throws
/// DomainError for the constant regime and for n too small for the logs.
GapBounds gap_bounds(const TypeIRegime& regime, std::size_t n, double d_slope, double c);

/// Smallest n for which gap_bounds is defined for this regime.
std::size_t gap_min_n(const TypeIRegime& regime);

/// Block length l = ceil(n^alpha) with alpha = 1/3, or (1-p)/3 for the
/// superpolynomial regime.
std::size_t select_block_length(const TypeIRegime& regime, std::size_t n);

inline constexpr double kRegimeThresholdK = 1.0;

struct SlackChoice {
    double h = 0;
    bool regime_one = true;  // h = eps_n; otherwise h = n^-2
    bool valid_lb = false;   // 1 - eps_n - h > 0
};

SlackChoice select_h(const TypeIRegime& regime, std::size_t n);

/// s solving h = 1 - eps - exp(-s^2 / (32 c^2)); NaN when 1 - eps - h <= 0.
double implied_s(double eps, double h, double c);

struct BoundReport {
    std::size_t n = 0;
    double eps_n = 0;
    std::optional<double> gap_lower;
    std::optional<double> gap_upper;
    double lb_prob = 0;
    double ub_prob = 0;
    double nominal = 0;
    // Natural logs of the three probabilities before clamping; these stay
    // finite long after the probabilities underflow.
    double log_lb = 0;
    double log_ub = 0;
    double log_nominal = 0;
    std::size_t block_l = 1;
    double h_n = 0;
    double s_n = 0;
    double delta_tilde = 0;
    bool valid_lb = false;
    bool dropped_residuals = true;

    /// ln(ub_prob - lb_prob) computed from the log fields.
    double log_interval_length() const;
};

struct OperatingPoint {
    double xi = 0;       // nats
    double d_slope = 0;  // dD/dR at the operating rate
};

BoundReport feasibility_interval(const OperatingPoint& pt, double c, const TypeIRegime& regime, std::size_t n);

struct CnsResult {
    double delta = 0;
    std::optional<std::size_t> cns;
    std::size_t cap = 0;
    std::vector<BoundReport> trace;
};

/// First n <= cap at which max{UB - e^{-n xi}, e^{-n xi} - LB} <= delta.
CnsResult critical_sample_size(const OperatingPoint& pt, double c, const TypeIRegime& regime, double delta,
                               std::size_t cap = 100000, bool keep_trace = false);

void write_bounds_csv(std::ostream& out, const std::vector<BoundReport>& rows);

struct CnsRow {
    TypeIRegime regime;
    CnsResult result;
};
void write_cns_csv(std::ostream& out, const std::vector<CnsRow>& rows);

}  // namespace dht
