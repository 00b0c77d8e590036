#include "dht/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "dht/error.hpp"
#include "dht/parallel.hpp"

namespace dht {

AliasTable::AliasTable(std::span<const double> weights) {
    const std::size_t k = weights.size();
    if (k == 0) throw DomainError("alias table needs at least one weight");
    double total = 0;
    for (double w : weights) {
        if (!(w >= 0) || !std::isfinite(w)) throw DomainError("alias weights must be finite and nonnegative");
        total += w;
    }
    if (!(total > 0)) throw DomainError("alias weights sum to zero");

    prob_.assign(k, 0.0);
    alias_.assign(k, 0);
    std::vector<double> scaled(k);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < k; ++i) {
        scaled[i] = weights[i] * static_cast<double>(k) / total;
        (scaled[i] < 1.0 ? small : large).push_back(i);
        alias_[i] = i;
    }
    while (!small.empty() && !large.empty()) {
        const std::size_t s = small.back();
        small.pop_back();
        const std::size_t l = large.back();
        prob_[s] = scaled[s];
        alias_[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    for (std::size_t i : large) prob_[i] = 1.0;
    // Leftovers here are rounding residue; only positive-weight columns may
    // keep themselves.
    for (std::size_t i : small) prob_[i] = weights[i] > 0 ? 1.0 : 0.0;
    for (std::size_t i = 0; i < k; ++i)
        if (weights[i] == 0 && alias_[i] == i) {
            // Point an empty column at any positive one.
            for (std::size_t j = 0; j < k; ++j)
                if (weights[j] > 0) {
                    alias_[i] = j;
                    prob_[i] = 0.0;
                    break;
                }
        }
}

QuantizedModel quantized_model(const JointPmf& p, const Encoder& enc) {
    if (enc.alphabet_x() != p.nx()) throw AlphabetMismatch("encoder alphabet differs from |X|");
    const std::size_t l = enc.block_len();
    const std::size_t nx = p.nx();
    const std::size_t ny = p.ny();
    std::size_t y_block = 1;
    for (std::size_t i = 0; i < l; ++i) y_block *= ny;
    const std::size_t x_block = enc.domain_size();
    if (l > 3 || x_block > kEnumerationCap / y_block)
        throw DomainError(fmt::format("block length {} over {}x{} exceeds the enumeration cap", l, nx, ny));

    QuantizedModel qm;
    qm.block_len_ = l;
    qm.codebook_ = enc.codebook_size();
    qm.y_block_ = y_block;
    qm.h0_.assign(qm.codebook_ * y_block, 0.0);
    qm.h1_.assign(qm.codebook_ * y_block, 0.0);

    std::vector<std::size_t> xs(l), ys(l);
    for (std::size_t xb = 0; xb < x_block; ++xb) {
        std::size_t rest = xb;
        for (std::size_t i = l; i-- > 0;) {
            xs[i] = rest % nx;
            rest /= nx;
        }
        const std::size_t u = enc(xb);
        double px_block = 1;
        for (std::size_t i = 0; i < l; ++i) px_block *= p.px()(xs[i]);
        for (std::size_t yb = 0; yb < y_block; ++yb) {
            std::size_t r2 = yb;
            for (std::size_t i = l; i-- > 0;) {
                ys[i] = r2 % ny;
                r2 /= ny;
            }
            double joint = 1, py_block = 1;
            for (std::size_t i = 0; i < l; ++i) {
                joint *= p(xs[i], ys[i]);
                py_block *= p.py()(ys[i]);
            }
            qm.h0_[qm.cell(u, yb)] += joint;
            qm.h1_[qm.cell(u, yb)] += px_block * py_block;
        }
    }

    qm.llr_.assign(qm.h0_.size(), 0.0);
    for (std::size_t c = 0; c < qm.h0_.size(); ++c)
        if (qm.h0_[c] > 0 && qm.h1_[c] > 0) qm.llr_[c] = std::log(qm.h0_[c] / qm.h1_[c]);
    qm.sample_h0_ = AliasTable(qm.h0_);
    qm.sample_h1_ = AliasTable(qm.h1_);
    return qm;
}

double QuantizedModel::mutual_information() const {
    double d = 0;
    for (std::size_t c = 0; c < h0_.size(); ++c)
        if (h0_[c] > 0) d += h0_[c] * llr_[c];
    return std::max(0.0, d);
}

double QuantizedModel::max_abs_llr() const {
    double m = 0;
    for (std::size_t c = 0; c < h0_.size(); ++c)
        if (h0_[c] > 0) m = std::max(m, std::abs(llr_[c]));
    return m;
}

namespace {

std::size_t blocks_per_trial(const QuantizedModel& qm, std::size_t n) {
    if (n == 0) throw DomainError("n must be positive");
    if (n % qm.block_len() != 0)
        throw DomainError(fmt::format("n = {} is not a multiple of the block length {}", n, qm.block_len()));
    return n / qm.block_len();
}

}  // namespace

double trial_statistic(const QuantizedModel& qm, std::size_t n, Hypothesis h, std::uint64_t seed,
                       std::uint32_t stream, std::uint64_t trial) {
    const std::size_t k = blocks_per_trial(qm, n);
    const AliasTable& table = qm.sampler(h);
    const auto& llr = qm.llr();
    TrialStream rng(seed, stream, trial);
    double sum = 0;
    for (std::size_t b = 0; b < k; ++b) sum += llr[table.sample(rng)];
    return sum / static_cast<double>(n);
}

ThresholdCalibration calibrate_threshold(const QuantizedModel& qm, std::size_t n, double eps,
                                         std::size_t cal_trials, std::uint64_t seed, unsigned workers) {
    if (!(eps > 0 && eps < 1)) throw DomainError("eps must lie in (0,1)");
    if (cal_trials == 0) throw DomainError("cal_trials must be positive");
    blocks_per_trial(qm, n);

    std::vector<double> stats(cal_trials);
    parallel_for(cal_trials, workers, [&](std::size_t i) {
        stats[i] = trial_statistic(qm, n, Hypothesis::Null, seed, streams::kCalibration, i);
    });
    std::sort(stats.begin(), stats.end());

    ThresholdCalibration out;
    out.few_trials = static_cast<double>(cal_trials) < 100.0 / eps;
    const auto allowed = static_cast<std::size_t>(std::floor(eps * static_cast<double>(cal_trials)));
    if (allowed >= cal_trials) {
        out.t = std::nextafter(stats.back(), std::numeric_limits<double>::infinity());
        out.empirical_type1 = 1.0;
        return out;
    }
    // Largest observed value strictly below the (allowed+1)-th order statistic.
    const double pivot = stats[allowed];
    const auto first_at_pivot = std::lower_bound(stats.begin(), stats.end(), pivot);
    if (first_at_pivot == stats.begin()) {
        out.t = std::nextafter(stats.front(), -std::numeric_limits<double>::infinity());
        out.saturated = true;
        out.empirical_type1 = 0.0;
        return out;
    }
    out.t = *(first_at_pivot - 1);
    out.empirical_type1 =
        static_cast<double>(first_at_pivot - stats.begin()) / static_cast<double>(cal_trials);
    return out;
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence) {
    if (trials == 0) throw DomainError("wilson interval needs at least one trial");
    if (!(confidence > 0 && confidence < 1)) throw DomainError("confidence must lie in (0,1)");
    const double nt = static_cast<double>(trials);
    if (successes == 0) return {0.0, std::min(1.0, -std::log(1.0 - confidence) / nt)};
    if (successes == trials) return {std::max(0.0, 1.0 + std::log(1.0 - confidence) / nt), 1.0};
    const double z = normal_quantile(0.5 + 0.5 * confidence);
    const double ph = static_cast<double>(successes) / nt;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nt;
    const double center = (ph + z2 / (2.0 * nt)) / denom;
    const double half = z / denom * std::sqrt(ph * (1.0 - ph) / nt + z2 / (4.0 * nt * nt));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

SimResult estimate_errors(const QuantizedModel& qm, std::size_t n, double t, std::size_t trials, std::uint64_t seed,
                          unsigned workers, double confidence) {
    if (trials == 0) throw DomainError("trials must be positive");
    blocks_per_trial(qm, n);

    // bit 0: Type I error on trial i, bit 1: Type II error.
    std::vector<std::uint8_t> errors(trials, 0);
    parallel_for(trials, workers, [&](std::size_t i) {
        std::uint8_t e = 0;
        if (trial_statistic(qm, n, Hypothesis::Null, seed, streams::kNull, i) <= t) e |= 1;
        if (trial_statistic(qm, n, Hypothesis::Alternative, seed, streams::kAlternative, i) > t) e |= 2;
        errors[i] = e;
    });

    SimResult r;
    r.n = n;
    r.trials = trials;
    r.threshold_t = t;
    r.seed = seed;
    r.confidence = confidence;
    for (std::uint8_t e : errors) {
        r.type1_count += e & 1;
        r.type2_count += (e >> 1) & 1;
    }
    const double nt = static_cast<double>(trials);
    r.type1_hat = static_cast<double>(r.type1_count) / nt;
    r.type2_hat = static_cast<double>(r.type2_count) / nt;
    r.type1_ci = wilson_interval(r.type1_count, trials, confidence);
    r.type2_ci = wilson_interval(r.type2_count, trials, confidence);
    return r;
}

namespace {

nlohmann::json interval_json(const Interval& iv) { return {{"lo", iv.lo}, {"hi", iv.hi}}; }

// JSON has no infinities; encode them as strings.
nlohmann::json real_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

}  // namespace

nlohmann::json SimResult::to_json() const {
    return {{"n", n},
            {"trials", trials},
            {"threshold_t", real_json(threshold_t)},
            {"eps_n", eps_n},
            {"type1_hat", type1_hat},
            {"type2_hat", type2_hat},
            {"type1_ci", interval_json(type1_ci)},
            {"type2_ci", interval_json(type2_ci)},
            {"confidence", confidence},
            {"seed", seed}};
}

void write_sim_csv(std::ostream& out, const std::vector<SimResult>& rows) {
    out << "n,eps_n,t,type1_hat,type2_hat,ci_lo,ci_hi,seed\n";
    for (const auto& r : rows)
        out << fmt::format("{},{},{},{},{},{},{},{}\n", r.n, r.eps_n, r.threshold_t, r.type1_hat, r.type2_hat,
                           r.type2_ci.lo, r.type2_ci.hi, r.seed);
}

double normal_quantile(double prob) {
    if (!(prob > 0 && prob < 1)) throw DomainError("normal quantile needs a probability in (0,1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (prob < p_low) {
        const double q = std::sqrt(-2.0 * std::log(prob));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (prob <= 1.0 - p_low) {
        const double q = prob - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-prob));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement against the exact CDF.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - prob;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

double centralized_second_order(const JointPmf& p, double eps, std::size_t n) {
    if (!(eps > 0 && eps < 1)) throw DomainError("eps must lie in (0,1)");
    if (n == 0) throw DomainError("n must be positive");
    const JointPmf q = product_model(p);
    const double d = kl_divergence(p, q);
    const double v = divergence_variance(p, q);
    const double nd = static_cast<double>(n);
    return d + std::sqrt(v / nd) * normal_quantile(eps) + std::log(nd) / (2.0 * nd);
}

}  // namespace dht
