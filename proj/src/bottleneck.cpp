#include "dht/bottleneck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "dht/error.hpp"
#include "dht/parallel.hpp"
#include "dht/rng.hpp"

namespace dht {

namespace {

// Columns lighter than this are treated as collapsed.
constexpr double kClusterFloor = 1e-15;

}  // namespace

TestChannel::TestChannel(Eigen::MatrixXd cond_probs) : m_(std::move(cond_probs)) {
    if (m_.rows() == 0 || m_.cols() == 0) throw InvalidDistribution("test channel must be non-empty");
    for (Eigen::Index x = 0; x < m_.rows(); ++x) {
        double row = 0;
        for (Eigen::Index u = 0; u < m_.cols(); ++u) {
            const double v = m_(x, u);
            if (!std::isfinite(v) || v < 0)
                throw InvalidDistribution(fmt::format("channel entry ({}, {}) is invalid: {}", x, u, v));
            row += v;
        }
        if (std::abs(row - 1.0) > kProbTol)
            throw InvalidDistribution(fmt::format("channel row {} sums to {:.17g}", x, row));
    }
}

std::size_t TestChannel::effective_clusters(const Eigen::VectorXd& px) const {
    const Eigen::VectorXd pu = m_.transpose() * px;
    return static_cast<std::size_t>((pu.array() > kClusterFloor).count());
}

TestChannel TestChannel::identity_plus_noise(std::size_t nx, std::size_t nu, double keep) {
    if (nu < nx) throw DomainError("identity-plus-noise needs at least as many clusters as inputs");
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(nx, nu, (1.0 - keep) / static_cast<double>(nu));
    for (std::size_t x = 0; x < nx; ++x) m(x, x) += keep;
    for (Eigen::Index x = 0; x < m.rows(); ++x) m.row(x) /= m.row(x).sum();
    return TestChannel(std::move(m));
}

TestChannel TestChannel::random(std::size_t nx, std::size_t nu, std::uint64_t seed) {
    Eigen::MatrixXd m(nx, nu);
    for (std::size_t x = 0; x < nx; ++x) {
        TrialStream rng(seed, 0x1b, x);
        for (std::size_t u = 0; u < nu; ++u) m(x, u) = -std::log1p(-rng.uniform()) + 1e-12;
        m.row(x) /= m.row(x).sum();
    }
    return TestChannel(std::move(m));
}

TestChannel TestChannel::constant(std::size_t nx, std::size_t nu) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nx, nu);
    m.col(0).setOnes();
    return TestChannel(std::move(m));
}

RateRelevance evaluate_channel(const JointPmf& p, const TestChannel& channel) {
    if (channel.nx() != p.nx()) throw AlphabetMismatch("channel input size differs from |X|");
    const Eigen::MatrixXd& q = channel.matrix();
    const Eigen::VectorXd pu = q.transpose() * p.px();
    const Eigen::MatrixXd puy = q.transpose() * p.probs();
    RateRelevance out;
    for (Eigen::Index x = 0; x < q.rows(); ++x)
        for (Eigen::Index u = 0; u < q.cols(); ++u) {
            const double v = q(x, u);
            if (v > 0 && pu(u) > 0) out.rate += p.px()(x) * v * std::log(v / pu(u));
        }
    for (Eigen::Index u = 0; u < puy.rows(); ++u)
        for (Eigen::Index y = 0; y < puy.cols(); ++y) {
            const double v = puy(u, y);
            if (v > 0) out.relevance += v * std::log(v / (pu(u) * p.py()(y)));
        }
    out.rate = std::max(0.0, out.rate);
    out.relevance = std::max(0.0, out.relevance);
    return out;
}

IbSolution ib_fixed_point(const JointPmf& p, double beta, const TestChannel& init, std::size_t max_iters,
                          double tol) {
    if (!(beta >= 0)) throw DomainError("beta must be nonnegative");
    if (init.nx() != p.nx()) throw AlphabetMismatch("initial channel input size differs from |X|");
    if (init.nu() != p.nx() + 1)
        throw DomainError(fmt::format("initial channel must have |X|+1 = {} clusters, got {}", p.nx() + 1,
                                      init.nu()));

    const Eigen::Index nx = static_cast<Eigen::Index>(p.nx());
    const Eigen::Index nu = static_cast<Eigen::Index>(init.nu());
    const Eigen::VectorXd& px = p.px();
    const Eigen::MatrixXd pyx = p.conditional_y_given_x();
    const Eigen::MatrixXd log_pyx = pyx.array().log().matrix();
    const Eigen::VectorXd neg_h = (pyx.array() * log_pyx.array()).rowwise().sum().matrix();
    const Eigen::ArrayXd log_py = p.py().array().log();

    Eigen::MatrixXd q = init.matrix();
    std::vector<bool> alive(static_cast<std::size_t>(nu), true);
    std::size_t pruned = 0;
    double prev_objective = std::numeric_limits<double>::infinity();
    bool converged = false;
    std::size_t it = 0;

    Eigen::VectorXd pu(nu);
    Eigen::MatrixXd log_pyu(nu, pyx.cols());
    Eigen::MatrixXd logits(nx, nu);

    for (; it < max_iters; ++it) {
        pu = q.transpose() * px;
        bool dropped = false;
        for (Eigen::Index u = 0; u < nu; ++u) {
            if (alive[u] && pu(u) < kClusterFloor) {
                alive[u] = false;
                ++pruned;
                q.col(u).setZero();
                dropped = true;
            }
        }
        if (dropped) {
            for (Eigen::Index x = 0; x < nx; ++x) q.row(x) /= q.row(x).sum();
            pu = q.transpose() * px;
        }
        // p(y|u) = sum_x p(u|x) p(x,y) / p(u)
        const Eigen::MatrixXd puy = q.transpose() * p.probs();

        double rate = 0;
        double relevance = 0;
        for (Eigen::Index u = 0; u < nu; ++u) {
            if (!alive[u]) continue;
            const double lpu = std::log(pu(u));
            for (Eigen::Index y = 0; y < puy.cols(); ++y) {
                const double lyu = std::log(puy(u, y)) - lpu;
                log_pyu(u, y) = lyu;
                relevance += puy(u, y) * (lyu - log_py(y));
            }
            for (Eigen::Index x = 0; x < nx; ++x) {
                const double v = q(x, u);
                if (v > 0) rate += px(x) * v * (std::log(v) - lpu);
            }
        }
        const double objective = rate - beta * relevance;
        if (std::abs(objective - prev_objective) < tol) {
            converged = true;
            break;
        }
        prev_objective = objective;

        // log p(u|x) = log p(u) - beta KL(p(y|x) || p(y|u)) + const(x)
        logits.noalias() = pyx * log_pyu.transpose();
        for (Eigen::Index x = 0; x < nx; ++x) {
            double top = -std::numeric_limits<double>::infinity();
            for (Eigen::Index u = 0; u < nu; ++u) {
                if (!alive[u]) continue;
                const double kl = neg_h(x) - logits(x, u);
                logits(x, u) = std::log(pu(u)) - beta * std::max(0.0, kl);
                top = std::max(top, logits(x, u));
            }
            double total = 0;
            for (Eigen::Index u = 0; u < nu; ++u) {
                const double v = alive[u] ? std::exp(logits(x, u) - top) : 0.0;
                q(x, u) = v;
                total += v;
            }
            q.row(x) /= total;
        }
    }

    TestChannel channel(std::move(q));
    const RateRelevance rr = evaluate_channel(p, channel);
    return IbSolution{std::move(channel), rr.rate, rr.relevance, beta, it, converged, pruned};
}

namespace {

std::vector<double> geometric(double lo, double hi, std::size_t count) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = hi;
        return out;
    }
    const double step = std::log(hi / lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) out[i] = lo * std::exp(step * static_cast<double>(i));
    out.back() = hi;
    return out;
}

IbSolution fixed_solution(const JointPmf& p, TestChannel channel) {
    const RateRelevance rr = evaluate_channel(p, channel);
    return IbSolution{std::move(channel), rr.rate, rr.relevance, 0.0, 0, true, 0};
}

TestChannel identity_channel(std::size_t nx, std::size_t nu) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nx, nu);
    for (std::size_t x = 0; x < nx; ++x) m(x, x) = 1.0;
    return TestChannel(std::move(m));
}

struct HullVertex {
    double rate;
    double relevance;
    std::size_t index;
};

// Upper concave hull, truncated after its highest vertex so it is nondecreasing.
std::vector<HullVertex> upper_envelope(const std::vector<IbSolution>& sols) {
    std::vector<HullVertex> pts;
    pts.reserve(sols.size());
    for (std::size_t i = 0; i < sols.size(); ++i) pts.push_back({sols[i].rate, sols[i].relevance, i});
    std::sort(pts.begin(), pts.end(), [](const HullVertex& a, const HullVertex& b) {
        if (a.rate != b.rate) return a.rate < b.rate;
        if (a.relevance != b.relevance) return a.relevance > b.relevance;
        return a.index < b.index;
    });
    std::vector<HullVertex> hull;
    for (const auto& pt : pts) {
        if (!hull.empty() && hull.back().rate == pt.rate) continue;  // keep the best at equal rate
        while (hull.size() >= 2) {
            const auto& a = hull[hull.size() - 2];
            const auto& b = hull.back();
            const double cross =
                (b.rate - a.rate) * (pt.relevance - a.relevance) - (b.relevance - a.relevance) * (pt.rate - a.rate);
            if (cross >= 0)
                hull.pop_back();
            else
                break;
        }
        hull.push_back(pt);
    }
    auto top = std::max_element(hull.begin(), hull.end(), [](const HullVertex& a, const HullVertex& b) {
        return a.relevance < b.relevance;
    });
    hull.erase(top + 1, hull.end());
    return hull;
}

TestChannel time_share(const TestChannel& a, const TestChannel& b, double lambda, const Eigen::VectorXd& px) {
    const Eigen::VectorXd pa = a.matrix().transpose() * px;
    const Eigen::VectorXd pb = b.matrix().transpose() * px;
    std::vector<Eigen::VectorXd> cols;
    for (Eigen::Index u = 0; u < a.matrix().cols(); ++u)
        if (pa(u) > kClusterFloor) cols.push_back(lambda * a.matrix().col(u));
    for (Eigen::Index u = 0; u < b.matrix().cols(); ++u)
        if (pb(u) > kClusterFloor) cols.push_back((1.0 - lambda) * b.matrix().col(u));
    Eigen::MatrixXd m(a.matrix().rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = cols[k];
    for (Eigen::Index x = 0; x < m.rows(); ++x) m.row(x) /= m.row(x).sum();
    return TestChannel(std::move(m));
}

IbSweep run_sweep(const JointPmf& p, const IbSettings& s) {
    if (!(s.beta_min > 0) || !(s.beta_max > s.beta_min) || s.beta_points < 2)
        throw DomainError("beta schedule needs 0 < beta_min < beta_max and at least 2 points");
    const std::size_t nx = p.nx();
    const std::size_t nu = nx + 1;
    const double mi = mutual_information(p);

    // Extend the top of the schedule until the solver is close to lossless, so
    // the critical trade-off of weakly dependent models is inside the sweep.
    double beta_top = s.beta_max;
    while (beta_top < 1e8) {
        const auto probe = ib_fixed_point(p, beta_top, TestChannel::identity_plus_noise(nx, nu), s.max_iters, s.tol);
        if (probe.relevance >= (1.0 - 1e-3) * mi) break;
        beta_top *= 10.0;
    }
    const double per_decade =
        static_cast<double>(s.beta_points - 1) / std::log10(s.beta_max / s.beta_min);
    const auto n_points =
        std::max(s.beta_points, static_cast<std::size_t>(std::ceil(per_decade * std::log10(beta_top / s.beta_min))) + 1);
    const auto schedule = geometric(s.beta_min, beta_top, n_points);

    const std::size_t n_chains = 1 + s.restarts;
    std::vector<std::vector<IbSolution>> chains(n_chains);
    parallel_for(n_chains, s.workers, [&](std::size_t c) {
        auto& out = chains[c];
        out.reserve(schedule.size());
        if (c == 0) {
            // Deterministic annealing downward from the near-lossless channel.
            TestChannel warm = TestChannel::identity_plus_noise(nx, nu);
            for (auto b = schedule.rbegin(); b != schedule.rend(); ++b) {
                out.push_back(ib_fixed_point(p, *b, warm, s.max_iters, s.tol));
                warm = out.back().channel;
            }
        } else {
            TestChannel warm = TestChannel::random(nx, nu, derive_seed(s.seed, c));
            for (double b : schedule) {
                out.push_back(ib_fixed_point(p, b, warm, s.max_iters, s.tol));
                warm = out.back().channel;
            }
        }
    });

    IbSweep sweep;
    sweep.beta_max_used = beta_top;
    sweep.solutions.push_back(fixed_solution(p, TestChannel::constant(nx, nu)));
    sweep.solutions.push_back(fixed_solution(p, identity_channel(nx, nu)));
    for (std::size_t c = 0; c < n_chains; ++c) {
        for (auto& sol : chains[c]) {
            if (c == 0) sweep.main_chain.push_back(sweep.solutions.size());
            sweep.solutions.push_back(std::move(sol));
        }
    }
    return sweep;
}

// Bisection on log(beta) along the main chain toward a solution whose rate
// sits just below r.
std::vector<IbSolution> refine_toward(const JointPmf& p, double r, const IbSweep& sweep, const IbSettings& s) {
    std::vector<IbSolution> extra;
    const auto& chain = sweep.main_chain;
    for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
        const IbSolution& hi = sweep.solutions[chain[k]];
        const IbSolution& lo = sweep.solutions[chain[k + 1]];
        if (!(hi.rate >= r && lo.rate <= r)) continue;
        double b_hi = hi.beta;
        double b_lo = lo.beta;
        TestChannel warm = hi.channel;
        for (std::size_t step = 0; step < s.refine_steps; ++step) {
            const double mid = std::sqrt(b_hi * b_lo);
            IbSolution sol = ib_fixed_point(p, mid, warm, s.max_iters, s.tol);
            if (sol.rate > r) {
                b_hi = mid;
                warm = sol.channel;
            } else {
                b_lo = mid;
            }
            extra.push_back(std::move(sol));
            if (b_hi / b_lo < 1.0 + 1e-9) break;
        }
        break;
    }
    return extra;
}

ExponentEstimate estimate_from(const JointPmf& p, double r, const IbSweep& sweep, const IbSettings& s) {
    std::vector<IbSolution> candidates = sweep.solutions;
    for (auto& sol : refine_toward(p, r, sweep, s)) candidates.push_back(std::move(sol));

    std::size_t best_single = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].rate <= r && candidates[i].relevance > candidates[best_single].relevance)
            best_single = i;
    }
    // candidates[0] is the constant channel, always feasible.

    const auto hull = upper_envelope(candidates);
    ExponentEstimate est;
    est.witness = candidates[best_single];
    est.xi = candidates[best_single].relevance;

    if (r < hull.back().rate) {
        std::size_t seg = 0;
        while (seg + 1 < hull.size() && hull[seg + 1].rate <= r) ++seg;
        const HullVertex& a = hull[seg];
        const HullVertex& b = hull[seg + 1];
        const double lambda = (b.rate - r) / (b.rate - a.rate);
        const double envelope = lambda * a.relevance + (1.0 - lambda) * b.relevance;
        if (envelope > est.xi + 1e-12) {
            TestChannel mixed = time_share(candidates[a.index].channel, candidates[b.index].channel, lambda, p.px());
            const RateRelevance rr = evaluate_channel(p, mixed);
            if (rr.relevance > est.xi) {
                est.concavity_residual = rr.relevance - est.xi;
                est.witness = IbSolution{std::move(mixed), rr.rate, rr.relevance, 0.0, 0,
                                         candidates[a.index].converged && candidates[b.index].converged, 0};
                est.xi = rr.relevance;
                est.interpolated = true;
            }
        }
    }
    return est;
}

IbSettings escalated(const IbSettings& s) {
    IbSettings e = s;
    e.restarts = 2 * s.restarts + 2;
    e.beta_points = 2 * s.beta_points;
    e.seed = derive_seed(s.seed, 0xE5CA1A7E);
    return e;
}

}  // namespace

IbSweep sweep_tradeoff(const JointPmf& p, const IbSettings& settings) { return run_sweep(p, settings); }

ExponentEstimate exponent_at_rate(const JointPmf& p, double r, IbSweep& sweep, const IbSettings& settings) {
    if (!(r >= 0)) throw DomainError(fmt::format("rate must be nonnegative, got {}", r));
    ExponentEstimate est = estimate_from(p, r, sweep, settings);
    if (est.concavity_residual > settings.concavity_tol) {
        const IbSettings wider = escalated(settings);
        const IbSweep extra = run_sweep(p, wider);
        ExponentEstimate second = estimate_from(p, r, extra, wider);
        second.escalated = true;
        if (second.xi > est.xi) {
            est = std::move(second);
        } else {
            est.escalated = true;
        }
    }
    return est;
}

ExponentEstimate exponent_at_rate(const JointPmf& p, double r, const IbSettings& settings) {
    if (!(r >= 0)) throw DomainError(fmt::format("rate must be nonnegative, got {}", r));
    IbSweep sweep = run_sweep(p, settings);
    return exponent_at_rate(p, r, sweep, settings);
}

ExponentCurve build_curve(const JointPmf& p, const std::vector<double>& r_grid, const IbSettings& settings) {
    if (r_grid.size() < 3) throw DomainError("rate grid needs at least 3 points for slope estimation");
    for (std::size_t i = 0; i < r_grid.size(); ++i) {
        if (!(r_grid[i] >= 0)) throw DomainError("rate grid must be nonnegative");
        if (i > 0 && !(r_grid[i] > r_grid[i - 1])) throw DomainError("rate grid must be strictly increasing");
    }

    ExponentCurve curve;
    curve.model_fingerprint = p.fingerprint_hex();
    curve.mutual_info = mutual_information(p);
    curve.entropy_x = p.entropy_x();
    curve.entropy_y = p.entropy_y();

    IbSweep sweep = run_sweep(p, settings);
    const std::size_t n = r_grid.size();
    curve.points.resize(n);
    curve.diagnostics.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ExponentEstimate est = exponent_at_rate(p, r_grid[i], sweep, settings);
        curve.points[i].rate = r_grid[i];
        curve.points[i].xi = est.xi;
        auto& diag = curve.diagnostics[i];
        diag.concavity_residual = est.concavity_residual;
        diag.interpolated = est.interpolated;
        diag.escalated = est.escalated;
        diag.witness_clusters = est.witness.channel.effective_clusters(p.px());
        diag.witness_converged = est.witness.converged;
    }

    // Every value is achievable, so a running maximum keeps the lower-bound
    // guarantee while removing solver noise.
    double running = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto& pt = curve.points[i];
        if (pt.xi < running) {
            curve.diagnostics[i].isotonic_adjustment = running - pt.xi;
            if (running - pt.xi > 1e-4) curve.isotonic_flag = true;
            pt.xi = running;
        }
        running = pt.xi;
        // Snap xi down to the ulp grid of H(Y) so that d + xi == H(Y) holds
        // bit for bit.
        if (curve.entropy_y > 0) {
            const double ulp = std::nextafter(curve.entropy_y, 2 * curve.entropy_y) - curve.entropy_y;
            pt.xi = std::floor(pt.xi / ulp) * ulp;
        }
        pt.d = curve.entropy_y - pt.xi;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i == 0 ? 0 : i - 1;
        const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
        curve.points[i].d_slope =
            (curve.points[hi].d - curve.points[lo].d) / (curve.points[hi].rate - curve.points[lo].rate);
    }
    return curve;
}

CurvePoint ExponentCurve::at(double rate) const {
    if (points.empty()) throw DomainError("empty exponent curve");
    if (rate <= points.front().rate) return points.front();
    if (rate >= points.back().rate) return points.back();
    std::size_t k = 1;
    while (points[k].rate < rate) ++k;
    const auto& a = points[k - 1];
    const auto& b = points[k];
    const double w = (rate - a.rate) / (b.rate - a.rate);
    CurvePoint out;
    out.rate = rate;
    out.xi = a.xi + w * (b.xi - a.xi);
    out.d = a.d + w * (b.d - a.d);
    out.d_slope = a.d_slope + w * (b.d_slope - a.d_slope);
    return out;
}

void ExponentCurve::write_csv(std::ostream& out) const {
    out << "R_nats,xi_nats,D_nats,dD_dR\n";
    for (const auto& pt : points) out << fmt::format("{},{},{},{}\n", pt.rate, pt.xi, pt.d, pt.d_slope);
}

nlohmann::json ExponentCurve::diagnostics_json(const IbSettings& settings) const {
    nlohmann::json j;
    j["model_fingerprint"] = model_fingerprint;
    j["mutual_information_nats"] = mutual_info;
    j["entropy_x_nats"] = entropy_x;
    j["entropy_y_nats"] = entropy_y;
    j["isotonic_flag"] = isotonic_flag;
    j["solver"] = {{"beta_min", settings.beta_min},   {"beta_max", settings.beta_max},
                   {"beta_points", settings.beta_points}, {"restarts", settings.restarts},
                   {"max_iters", settings.max_iters}, {"tol", settings.tol},
                   {"seed", settings.seed}};
    auto pts = nlohmann::json::array();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& d = diagnostics[i];
        pts.push_back({{"R_nats", points[i].rate},
                       {"concavity_residual", d.concavity_residual},
                       {"isotonic_adjustment", d.isotonic_adjustment},
                       {"interpolated", d.interpolated},
                       {"escalated", d.escalated},
                       {"witness_clusters", d.witness_clusters},
                       {"witness_converged", d.witness_converged}});
    }
    j["points"] = std::move(pts);
    return j;
}

}  // namespace dht
