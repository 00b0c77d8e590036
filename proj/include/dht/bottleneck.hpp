#pragma once

// Rate-relevance trade-off of the information bottleneck:
//   xi(R) = max { I(U;Y) : U - X - Y, I(U;X) <= R, |U| <= |X| + 1 },
// and its log-loss dual D(R) = H(Y) - xi(R).

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "dht/dist.hpp"

namespace dht {

/// Row-stochastic p(u|x). The Markov chain U - X - Y holds by construction.
class TestChannel {
public:
    explicit TestChannel(Eigen::MatrixXd cond_probs);

    std::size_t nx() const { return static_cast<std::size_t>(m_.rows()); }
    std::size_t nu() const { return static_cast<std::size_t>(m_.cols()); }
    const Eigen::MatrixXd& matrix() const { return m_; }

    /// Columns with positive total mass under the given input marginal.
    std::size_t effective_clusters(const Eigen::VectorXd& px) const;

    /// Each x keeps its own cluster with probability `keep`; the remaining mass
    /// is spread uniformly. Needs nu >= nx.
    static TestChannel identity_plus_noise(std::size_t nx, std::size_t nu, double keep = 0.9);
    static TestChannel random(std::size_t nx, std::size_t nu, std::uint64_t seed);
    static TestChannel constant(std::size_t nx, std::size_t nu);

private:
    Eigen::MatrixXd m_;
};

/// I(U;X) and I(U;Y) computed directly from a channel.
struct RateRelevance {
    double rate = 0;
    double relevance = 0;
};
RateRelevance evaluate_channel(const JointPmf& p, const TestChannel& channel);

struct IbSolution {
    TestChannel channel{Eigen::MatrixXd::Ones(1, 1)};
    double rate = 0;       // I(U;X)
    double relevance = 0;  // I(U;Y)
    double beta = 0;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t pruned_clusters = 0;
};

/// Self-consistent IB iteration at a fixed trade-off beta:
///   p(u)   <- sum_x p(u|x) p(x)
///   p(y|u) <- sum_x p(y|x) p(x|u)
///   p(u|x) <- p(u) exp(-beta KL(p(y|x) || p(y|u))), row-normalized
/// until the objective I(U;X) - beta I(U;Y) moves by less than tol.
IbSolution ib_fixed_point(const JointPmf& p, double beta, const TestChannel& init,
                          std::size_t max_iters = 5000, double tol = 1e-12);

struct IbSettings {
    double beta_min = 0.1;
    double beta_max = 100.0;
    std::size_t beta_points = 40;
    std::size_t restarts = 4;
    std::size_t max_iters = 5000;
    double tol = 1e-12;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    /// Bisection steps on log(beta) when refining toward a target rate.
    std::size_t refine_steps = 30;
    /// Envelope concavity residual that triggers one round of extra restarts.
    double concavity_tol = 1e-3;
};

/// Every (rate, relevance) point visited by an annealing sweep, plus the
/// trivial and lossless channels. Reusable across target rates.
struct IbSweep {
    std::vector<IbSolution> solutions;
    /// Solutions of the identity-initialised chain ordered by decreasing beta.
    std::vector<std::size_t> main_chain;
    double beta_max_used = 0;
};

IbSweep sweep_tradeoff(const JointPmf& p, const IbSettings& settings);

struct ExponentEstimate {
    double xi = 0;
    IbSolution witness;
    /// Envelope value minus the best single solution with rate <= r.
    double concavity_residual = 0;
    bool interpolated = false;
    bool escalated = false;
};

/// Certified lower bound on xi(r): the witness channel achieves
/// (rate <= r, relevance = xi).
ExponentEstimate exponent_at_rate(const JointPmf& p, double r, const IbSettings& settings = {});
ExponentEstimate exponent_at_rate(const JointPmf& p, double r, IbSweep& sweep, const IbSettings& settings);

struct CurvePoint {
    double rate = 0;
    double xi = 0;
    double d = 0;
    double d_slope = 0;
};

struct CurveDiagnostics {
    double concavity_residual = 0;
    double isotonic_adjustment = 0;
    bool interpolated = false;
    bool escalated = false;
    std::size_t witness_clusters = 0;
    bool witness_converged = false;
};

struct ExponentCurve {
    std::vector<CurvePoint> points;
    std::vector<CurveDiagnostics> diagnostics;
    std::string model_fingerprint;
    double mutual_info = 0;
    double entropy_x = 0;
    double entropy_y = 0;
    bool isotonic_flag = false;  // some adjustment exceeded 1e-4

    /// Linear interpolation of (xi, d_slope) at a rate inside the grid.
    CurvePoint at(double rate) const;

    void write_csv(std::ostream& out) const;
    nlohmann::json diagnostics_json(const IbSettings& settings) const;
};

/// Evaluates xi on a strictly increasing rate grid (nats) and derives D and
/// its finite-difference slope. Needs at least 3 grid points.
ExponentCurve build_curve(const JointPmf& p, const std::vector<double>& r_grid,
                          const IbSettings& settings = {});

}  // namespace dht
