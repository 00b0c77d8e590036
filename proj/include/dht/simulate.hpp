#pragma once

// Monte Carlo estimation of the Type I / Type II errors of a quantize-then-test
// scheme: X^n is encoded blockwise, Y^n is observed directly, and the detector
// thresholds the per-sample log-likelihood ratio of the quantized model.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "dht/dist.hpp"
#include "dht/quantizer.hpp"
#include "dht/rng.hpp"

namespace dht {

enum class Hypothesis { Null, Alternative };  // H0: P_XY, H1: P_X P_Y

/// Exact joint pmf of (f_l(X^l), Y^l) under both hypotheses.
class QuantizedModel {
public:
    std::size_t block_len() const { return block_len_; }
    std::size_t codebook_size() const { return codebook_; }
    std::size_t y_block_size() const { return y_block_; }
    std::size_t cells() const { return h0_.size(); }
    std::size_t cell(std::size_t u, std::size_t y_block) const { return u * y_block_ + y_block; }

    /// Row-major (codeword, y-block) tables.
    const std::vector<double>& h0() const { return h0_; }
    const std::vector<double>& h1() const { return h1_; }
    /// log(h0/h1) per cell; 0 on cells with no mass.
    const std::vector<double>& llr() const { return llr_; }

    const AliasTable& sampler(Hypothesis h) const { return h == Hypothesis::Null ? sample_h0_ : sample_h1_; }

    /// D(H0 || H1) = I(f_l(X^l); Y^l), in nats per block.
    double mutual_information() const;
    double max_abs_llr() const;

    friend QuantizedModel quantized_model(const JointPmf& p, const Encoder& enc);

private:
    std::size_t block_len_ = 1;
    std::size_t codebook_ = 1;
    std::size_t y_block_ = 1;
    std::vector<double> h0_;
    std::vector<double> h1_;
    std::vector<double> llr_;
    AliasTable sample_h0_;
    AliasTable sample_h1_;
};

/// Maximum |X|^l * |Y|^l enumerated when building a quantized model.
inline constexpr std::size_t kEnumerationCap = std::size_t{1} << 26;

QuantizedModel quantized_model(const JointPmf& p, const Encoder& enc);

/// Per-sample statistic (1/n) sum of block log-ratios for one trial.
double trial_statistic(const QuantizedModel& qm, std::size_t n, Hypothesis h, std::uint64_t seed,
                       std::uint32_t stream, std::uint64_t trial);

namespace streams {
inline constexpr std::uint32_t kCalibration = 1;
inline constexpr std::uint32_t kNull = 2;
inline constexpr std::uint32_t kAlternative = 3;
}  // namespace streams

struct ThresholdCalibration {
    double t = 0;
    bool saturated = false;      // eps below the resolution of the calibration set
    bool few_trials = false;     // cal_trials < 100 / eps
    double empirical_type1 = 0;  // on the calibration set
};

/// Empirical eps-quantile from below of S under H0: the region {S > t} has
/// empirical Type I <= eps on the calibration draws.
ThresholdCalibration calibrate_threshold(const QuantizedModel& qm, std::size_t n, double eps,
                                         std::size_t cal_trials, std::uint64_t seed, unsigned workers = 1);

struct Interval {
    double lo = 0;
    double hi = 1;
    double half_width() const { return 0.5 * (hi - lo); }
    bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Wilson score interval; zero (or full) counts use the one-sided
/// rule-of-three bound -ln(1 - confidence) / trials.
Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence = 0.95);

struct SimResult {
    std::size_t n = 0;
    std::size_t trials = 0;
    double threshold_t = 0;
    double eps_n = 0;
    std::size_t type1_count = 0;
    std::size_t type2_count = 0;
    double type1_hat = 0;
    double type2_hat = 0;
    Interval type1_ci;
    Interval type2_ci;
    double confidence = 0.95;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// Decide H0 when S > t. Type I counts S <= t under H0, Type II counts S > t
/// under H1. n must be a multiple of the block length.
SimResult estimate_errors(const QuantizedModel& qm, std::size_t n, double t, std::size_t trials,
                          std::uint64_t seed, unsigned workers = 1, double confidence = 0.95);

void write_sim_csv(std::ostream& out, const std::vector<SimResult>& rows);

/// Standard normal quantile (Acklam's rational approximation polished by one
/// Halley step).
double normal_quantile(double prob);

/// D(P||Q) + sqrt(V(P||Q)/n) Phi^{-1}(eps) + ln(n) / (2n) with Q = P_X P_Y.
double centralized_second_order(const JointPmf& p, double eps, std::size_t n);

}  // namespace dht
