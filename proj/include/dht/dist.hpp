#pragma once

// Finite joint distributions P_XY, their product (null) model Q_XY = P_X P_Y,
// and the information quantities used throughout the library. All quantities
// are in nats.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dht {

inline constexpr double kProbTol = 1e-12;
inline constexpr double kInfoTol = 1e-9;

/// Symbol names for one side of the alphabet, optionally tied to real grid
/// positions (used by the scalar quantizer design).
struct Alphabet {
    std::vector<std::string> names;
    std::vector<double> positions;  // empty, or one per symbol

    std::size_t size() const { return names.size(); }
    bool has_positions() const { return !positions.empty(); }

    static Alphabet indexed(std::size_t n);
    static Alphabet from_positions(std::vector<double> positions);
    bool operator==(const Alphabet&) const = default;
};

/// A full-support joint pmf over a finite product alphabet X x Y.
/// Immutable after construction; marginals are cached.
class JointPmf {
public:
    /// Validates the matrix: every entry strictly positive, entries sum to 1
    /// within kProbTol. Throws InvalidDistribution naming the offending cell.
    explicit JointPmf(Eigen::MatrixXd probs, Alphabet x = {}, Alphabet y = {});

    std::size_t nx() const { return static_cast<std::size_t>(probs_.rows()); }
    std::size_t ny() const { return static_cast<std::size_t>(probs_.cols()); }
    double operator()(std::size_t x, std::size_t y) const {
        return probs_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    }

    const Eigen::MatrixXd& probs() const { return probs_; }
    const Eigen::VectorXd& px() const { return px_; }
    const Eigen::VectorXd& py() const { return py_; }
    const Alphabet& x_alphabet() const { return x_; }
    const Alphabet& y_alphabet() const { return y_; }

    double entropy_x() const;
    double entropy_y() const;

    /// Row-stochastic P_{Y|X}.
    Eigen::MatrixXd conditional_y_given_x() const;

    /// 64-bit FNV-1a hash over the shape and the raw probability bits.
    std::uint64_t fingerprint() const;
    std::string fingerprint_hex() const;

    nlohmann::json to_json() const;
    static JointPmf from_json(const nlohmann::json& j);

private:
    Eigen::MatrixXd probs_;
    Eigen::VectorXd px_;
    Eigen::VectorXd py_;
    Alphabet x_;
    Alphabet y_;
};

struct DivergenceStats {
    double kl = 0;       // D(P || P_X P_Y)
    double mi = 0;       // I(X;Y); equal to kl for the product reference
    double var_div = 0;  // V(P || P_X P_Y)
    double c_const = 0;  // max |log P/Q|
};

double entropy(std::span<const double> pmf);

/// Q(x,y) = P_X(x) P_Y(y), carrying the same alphabets.
JointPmf product_model(const JointPmf& p);

double mutual_information(const JointPmf& p);

/// C(P_XY): the largest absolute log-likelihood ratio between P and P_X P_Y.
double c_constant(const JointPmf& p);

double kl_divergence(const JointPmf& p, const JointPmf& q);
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// V(P||Q) = sum_z P(z) [log(P/Q)(z) - D(P||Q)]^2.
double divergence_variance(const JointPmf& p, const JointPmf& q);
double divergence_variance(std::span<const double> p, std::span<const double> q);

DivergenceStats divergence_stats(const JointPmf& p);

/// Bivariate standard normal with the given correlation, sampled on a
/// uniform nx x ny grid over [-span, span] per axis and renormalized.
JointPmf discretized_gaussian(double correlation, std::size_t nx, std::size_t ny,
                              double span_sigmas = 4.0);

struct Calibration {
    double correlation = 0;
    JointPmf model;
};

/// Bisects the correlation so that the discretized Gaussian has the target
/// mutual information within 1e-6 nats.
Calibration calibrate_correlation(double target_mi, std::size_t nx, std::size_t ny,
                                  double span_sigmas = 4.0);

}  // namespace dht
