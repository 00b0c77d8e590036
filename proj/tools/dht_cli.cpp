// dht: command-line front end.
//
//   dht model     --gaussian (--target-mi-nats M | --rho R) --grid N
//   dht exponent  --model model.json --rates 0.5,1,2
//   dht bounds    (--xi X --c C | --model model.json --rate R) --regime poly:0.1 --n-grid 100,200
//   dht cns       --xi X --c C --regimes poly:0.01,log --deltas 1e-5
//   dht simulate  --model model.json --rate-bits 2 --n-grid 100 --regime const:0.1 --trials 100000
//
// Rates are read in bits per sample unless --units nats is given. Every
// output carries the seed it was produced with.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "dht/bottleneck.hpp"
#include "dht/bounds.hpp"
#include "dht/dist.hpp"
#include "dht/error.hpp"
#include "dht/quantizer.hpp"
#include "dht/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Global {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::string units = "bits";

    double rate_to_nats(double r) const { return units == "bits" ? r * std::log(2.0) : r; }
    fs::path path(const std::string& name) const { return fs::path(out_dir) / name; }
};

// Collects invariant violations; the process exits nonzero if any fired.
struct Checks {
    std::vector<std::string> failed;
    void require(bool ok, const std::string& name, const std::string& detail = {}) {
        if (ok) return;
        failed.push_back(name);
        std::cerr << "invariant failed: " << name << (detail.empty() ? "" : " (" + detail + ")") << "\n";
    }
    int exit_code() const { return failed.empty() ? 0 : 1; }
};

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw dht::Error(fmt::format("cannot write {}", p.string()));
    out << text;
}

dht::JointPmf load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dht::Error(fmt::format("cannot open model file {}", path));
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw dht::Error(fmt::format("{} is not valid JSON: {}", path, e.what()));
    }
    return dht::JointPmf::from_json(j.contains("model") ? j.at("model") : j);
}

std::vector<std::size_t> n_grid_from(const std::vector<std::size_t>& list, std::size_t lo, std::size_t hi,
                                     std::size_t step) {
    if (!list.empty()) return list;
    if (step == 0) throw dht::DomainError("--n-step must be positive");
    std::vector<std::size_t> out;
    for (std::size_t n = lo; n <= hi; n += step) out.push_back(n);
    return out;
}

// ---------------------------------------------------------------- model

struct ModelArgs {
    bool gaussian = false;
    std::optional<double> target_mi;
    std::optional<double> rho;
    std::size_t grid = 0;
    std::size_t nx = 0, ny = 0;
    double span = 4.0;
    std::string out = "model.json";
};

int cmd_model(const Global& g, const ModelArgs& a) {
    if (!a.gaussian) throw dht::DomainError("only --gaussian models are supported");
    const std::size_t nx = a.nx ? a.nx : a.grid;
    const std::size_t ny = a.ny ? a.ny : a.grid;
    if (nx < 2 || ny < 2) throw CLI::ValidationError("--grid", "give --grid or both --nx and --ny, each at least 2");

    double rho = 0;
    std::optional<dht::JointPmf> model;
    if (a.target_mi) {
        auto cal = dht::calibrate_correlation(*a.target_mi, nx, ny, a.span);
        rho = cal.correlation;
        model = std::move(cal.model);
    } else {
        rho = a.rho.value_or(0.0);
        model = dht::discretized_gaussian(rho, nx, ny, a.span);
    }

    const double mi = dht::mutual_information(*model);
    const double hx = model->entropy_x();
    const double hy = model->entropy_y();
    const double c = dht::c_constant(*model);

    Checks checks;
    checks.require(mi <= std::min(hx, hy) + dht::kInfoTol, "mi_below_entropies");
    checks.require(!a.target_mi || std::abs(mi - *a.target_mi) <= 1e-6, "mi_matches_target");

    json j = model->to_json();
    j["correlation"] = rho;
    j["seed"] = g.seed;
    j["fingerprint"] = model->fingerprint_hex();
    write_text(g.path(a.out), j.dump(2) + "\n");

    fmt::print("model {}x{} rho={:.9g} MI={:.9g} H(X)={:.9g} H(Y)={:.9g} C={:.9g} nats seed={} -> {}\n", nx, ny,
               rho, mi, hx, hy, c, g.seed, g.path(a.out).string());
    return checks.exit_code();
}

// ---------------------------------------------------------------- exponent

struct SolverArgs {
    std::size_t beta_points = 40;
    std::size_t restarts = 4;
    double beta_min = 0.1;
    double beta_max = 100.0;
    unsigned workers = 1;

    dht::IbSettings settings(std::uint64_t seed) const {
        dht::IbSettings s;
        s.beta_points = beta_points;
        s.restarts = restarts;
        s.beta_min = beta_min;
        s.beta_max = beta_max;
        s.workers = workers;
        s.seed = seed;
        return s;
    }
};

void add_solver_flags(CLI::App* cmd, SolverArgs& s) {
    cmd->add_option("--beta-points", s.beta_points, "Trade-off parameters per sweep")->check(CLI::PositiveNumber);
    cmd->add_option("--restarts", s.restarts, "Random restarts per sweep");
    cmd->add_option("--beta-min", s.beta_min, "Smallest trade-off parameter")->check(CLI::PositiveNumber);
    cmd->add_option("--beta-max", s.beta_max, "Largest trade-off parameter")->check(CLI::PositiveNumber);
    cmd->add_option("--workers", s.workers, "Worker threads (0 = all cores)");
}

struct ExponentArgs {
    std::string model;
    std::vector<double> rates;
    std::string out = "curve.csv";
    SolverArgs solver;
};

void check_curve(Checks& checks, const dht::ExponentCurve& curve) {
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        const auto& pt = curve.points[i];
        checks.require(pt.d + pt.xi == curve.entropy_y, "d_plus_xi_equals_hy", fmt::format("point {}", i));
        checks.require(pt.xi <= curve.mutual_info + 1e-9, "xi_below_mi", fmt::format("point {}", i));
        checks.require(pt.xi <= pt.rate + 1e-9, "xi_below_rate", fmt::format("point {}", i));
        checks.require(pt.d_slope <= 1e-6, "slope_nonpositive", fmt::format("point {}", i));
        if (i > 0) checks.require(pt.xi >= curve.points[i - 1].xi, "xi_nondecreasing", fmt::format("point {}", i));
    }
}

int cmd_exponent(const Global& g, const ExponentArgs& a) {
    const dht::JointPmf p = load_model(a.model);
    std::vector<double> grid;
    for (double r : a.rates) grid.push_back(g.rate_to_nats(r));
    const dht::IbSettings settings = a.solver.settings(g.seed);
    const dht::ExponentCurve curve = dht::build_curve(p, grid, settings);

    Checks checks;
    check_curve(checks, curve);

    std::ostringstream csv;
    curve.write_csv(csv);
    write_text(g.path(a.out), csv.str());
    json side = curve.diagnostics_json(settings);
    side["seed"] = g.seed;
    side["units_in"] = g.units;
    const fs::path side_path = g.path(fs::path(a.out).replace_extension(".json").string());
    write_text(side_path, side.dump(2) + "\n");

    for (const auto& pt : curve.points)
        fmt::print("R={:.6g} nats  xi={:.9g}  D={:.9g}  dD/dR={:.6g}\n", pt.rate, pt.xi, pt.d, pt.d_slope);
    fmt::print("seed={} -> {}\n", g.seed, g.path(a.out).string());
    return checks.exit_code();
}

// ---------------------------------------------------------------- bounds / cns

struct PointArgs {
    std::optional<double> xi;
    std::optional<double> c;
    double d_slope = 0.0;
    std::string model;
    std::optional<double> rate;
    SolverArgs solver;
};

void add_point_flags(CLI::App* cmd, PointArgs& p) {
    cmd->add_option("--xi", p.xi, "Exponent xi(R) in nats");
    cmd->add_option("--c", p.c, "Constant C(P_XY)")->check(CLI::PositiveNumber);
    cmd->add_option("--d-slope", p.d_slope, "Slope dD/dR at the operating rate (<= 0)");
    cmd->add_option("--model", p.model, "Model JSON (alternative to --xi/--c)")->check(CLI::ExistingFile);
    cmd->add_option("--rate", p.rate, "Operating rate for --model");
    add_solver_flags(cmd, p.solver);
}

struct ResolvedPoint {
    dht::OperatingPoint pt;
    double c = 0;
};

ResolvedPoint resolve_point(const Global& g, const PointArgs& a) {
    ResolvedPoint out;
    if (!a.model.empty()) {
        if (!a.rate) throw CLI::ValidationError("--rate", "required with --model");
        const dht::JointPmf p = load_model(a.model);
        const double r = g.rate_to_nats(*a.rate);
        if (!(r > 0)) throw CLI::ValidationError("--rate", "must be positive");
        const std::vector<double> grid{0.95 * r, r, 1.05 * r};
        const auto curve = dht::build_curve(p, grid, a.solver.settings(g.seed));
        out.pt = {curve.points[1].xi, curve.points[1].d_slope};
        out.c = a.c.value_or(dht::c_constant(p));
    } else {
        if (!a.xi || !a.c) throw CLI::ValidationError("--xi/--c", "give --xi and --c, or --model and --rate");
        out.pt = {*a.xi, a.d_slope};
        out.c = *a.c;
    }
    if (out.pt.d_slope > 0) throw CLI::ValidationError("--d-slope", "must be nonpositive");
    return out;
}

struct BoundsArgs {
    PointArgs point;
    std::string regime = "poly:0.1";
    std::vector<std::size_t> n_list;
    std::size_t n_min = 10, n_max = 200, n_step = 10;
    std::string out = "bounds.csv";
};

int cmd_bounds(const Global& g, const BoundsArgs& a) {
    const auto rp = resolve_point(g, a.point);
    const auto regime = dht::TypeIRegime::parse(a.regime);
    Checks checks;
    std::vector<dht::BoundReport> rows;
    for (std::size_t n : n_grid_from(a.n_list, a.n_min, a.n_max, a.n_step)) {
        auto r = dht::feasibility_interval(rp.pt, rp.c, regime, n);
        checks.require(r.lb_prob <= r.nominal && r.nominal <= r.ub_prob, "lb_nominal_ub_ordered",
                       fmt::format("n={}", n));
        rows.push_back(std::move(r));
    }
    std::ostringstream csv;
    dht::write_bounds_csv(csv, rows);
    write_text(g.path(a.out), csv.str());
    fmt::print("regime={} xi={:.9g} c={:.9g} d_slope={:.6g} rows={} seed={} -> {}\n", regime.label(), rp.pt.xi,
               rp.c, rp.pt.d_slope, rows.size(), g.seed, g.path(a.out).string());
    return checks.exit_code();
}

struct CnsArgs {
    PointArgs point;
    std::vector<std::string> regimes{"poly:0.01", "poly:0.1", "log", "const:0.1"};
    std::vector<double> deltas{1e-5};
    std::size_t cap = 100000;
    std::string out = "cns.csv";
};

int cmd_cns(const Global& g, const CnsArgs& a) {
    const auto rp = resolve_point(g, a.point);
    Checks checks;
    std::vector<dht::CnsRow> rows;
    for (const auto& spec : a.regimes) {
        const auto regime = dht::TypeIRegime::parse(spec);
        for (double delta : a.deltas) {
            auto res = dht::critical_sample_size(rp.pt, rp.c, regime, delta, a.cap);
            if (res.cns) {
                const auto rep = dht::feasibility_interval(rp.pt, rp.c, regime, *res.cns);
                checks.require(std::max(rep.ub_prob - rep.nominal, rep.nominal - rep.lb_prob) <= delta,
                               "cns_meets_precision", fmt::format("{} delta={}", spec, delta));
            }
            fmt::print("{:<14} delta={:<8g} cns={}\n", regime.label(), delta,
                       res.cns ? std::to_string(*res.cns) : std::string("none"));
            rows.push_back({regime, std::move(res)});
        }
    }
    std::ostringstream csv;
    dht::write_cns_csv(csv, rows);
    write_text(g.path(a.out), csv.str());
    fmt::print("xi={:.9g} c={:.9g} d_slope={:.6g} seed={} -> {}\n", rp.pt.xi, rp.c, rp.pt.d_slope, g.seed,
               g.path(a.out).string());
    return checks.exit_code();
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string model;
    std::optional<double> rate_bits;
    std::size_t block_len = 1;
    std::vector<std::size_t> n_list;
    std::string regime = "const:0.1";
    std::size_t trials = 100000;
    std::size_t cal_trials = 0;
    std::string force_threshold;
    std::string preset;
    double confidence = 0.95;
    unsigned workers = 1;
    std::string out = "sim.csv";
};

double parse_threshold(const std::string& s) {
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw CLI::ValidationError("--force-threshold", fmt::format("'{}' is not a number, inf or -inf", s));
}

int cmd_simulate(const Global& g, SimulateArgs a) {
    if (a.preset == "full") {
        a.trials = 2500000;
    } else if (!a.preset.empty()) {
        throw CLI::ValidationError("--preset", fmt::format("unknown preset '{}'", a.preset));
    }
    const dht::JointPmf p = load_model(a.model);
    const auto regime = dht::TypeIRegime::parse(a.regime);

    dht::Encoder enc = dht::Encoder::identity(p.nx(), a.block_len);
    std::size_t levels = p.nx();
    if (a.rate_bits) {
        const double bits = *a.rate_bits;
        levels = dht::levels_for_rate(bits);
        if (levels < p.nx()) enc = dht::lloyd_max(p, levels).encoder(a.block_len);
    }
    const dht::QuantizedModel qm = dht::quantized_model(p, enc);

    Checks checks;
    const double mi = dht::mutual_information(p);
    checks.require(qm.mutual_information() <= static_cast<double>(a.block_len) * mi + 1e-9, "data_processing");
    if (a.rate_bits) checks.require(enc.respects_rate(*a.rate_bits), "encoder_respects_rate");

    const std::optional<double> forced =
        a.force_threshold.empty() ? std::nullopt : std::optional<double>(parse_threshold(a.force_threshold));

    std::vector<dht::SimResult> rows;
    json runs = json::array();
    for (std::size_t n : a.n_list) {
        const double eps = dht::eps_at(regime, n);
        double t = 0;
        json cal_info;
        if (forced) {
            t = *forced;
            cal_info = {{"forced", true}};
        } else {
            const std::size_t cal =
                a.cal_trials ? a.cal_trials : std::max<std::size_t>(10000, static_cast<std::size_t>(std::ceil(100.0 / eps)));
            const auto c = dht::calibrate_threshold(qm, n, eps, cal, g.seed, a.workers);
            t = c.t;
            cal_info = {{"forced", false},
                        {"cal_trials", cal},
                        {"saturated", c.saturated},
                        {"few_trials", c.few_trials},
                        {"empirical_type1", c.empirical_type1}};
            if (c.saturated) std::cerr << fmt::format("warning: n={} eps={} below calibration resolution\n", n, eps);
            if (c.few_trials) std::cerr << fmt::format("warning: n={} fewer than 100/eps calibration trials\n", n);
        }
        auto r = dht::estimate_errors(qm, n, t, a.trials, g.seed, a.workers, a.confidence);
        r.eps_n = eps;
        checks.require(r.type1_ci.contains(r.type1_hat) && r.type2_ci.contains(r.type2_hat), "estimate_in_interval",
                       fmt::format("n={}", n));
        if (std::isinf(t) && t < 0)
            checks.require(r.type1_hat == 0 && r.type2_hat == 1, "accept_all_degenerate");
        if (std::isinf(t) && t > 0)
            checks.require(r.type1_hat == 1 && r.type2_hat == 0, "reject_all_degenerate");
        json jr = r.to_json();
        jr["calibration"] = cal_info;
        runs.push_back(std::move(jr));
        fmt::print("n={} eps_n={:.6g} t={:.9g} type1={:.6g} type2={:.6g} [{:.6g}, {:.6g}]\n", n, eps, t, r.type1_hat,
                   r.type2_hat, r.type2_ci.lo, r.type2_ci.hi);
        rows.push_back(std::move(r));
    }

    std::ostringstream csv;
    dht::write_sim_csv(csv, rows);
    write_text(g.path(a.out), csv.str());
    json side{{"config",
               {{"model", a.model},
                {"model_fingerprint", p.fingerprint_hex()},
                {"rate_bits", a.rate_bits ? json(*a.rate_bits) : json(nullptr)},
                {"levels", enc.codebook_size()},
                {"levels_reduced", enc.levels_reduced},
                {"block_len", a.block_len},
                {"regime", regime.label()},
                {"trials", a.trials},
                {"confidence", a.confidence},
                {"preset", a.preset},
                {"seed", g.seed}}},
              {"quantized_mi_nats_per_block", qm.mutual_information()},
              {"runs", runs}};
    write_text(g.path(fs::path(a.out).replace_extension(".json").string()), side.dump(2) + "\n");
    fmt::print("seed={} -> {}\n", g.seed, g.path(a.out).string());
    return checks.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed testing against independence: exponents, finite-length bounds, simulation"};
    app.require_subcommand(1);
    Global g;
    app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
    app.add_option("--units", g.units, "Unit of rates given on the command line")
        ->check(CLI::IsMember({"bits", "nats"}))
        ->capture_default_str();

    ModelArgs model;
    auto* m = app.add_subcommand("model", "Build a discretized Gaussian joint pmf");
    m->add_flag("--gaussian", model.gaussian, "Discretized bivariate Gaussian");
    auto* mi_opt = m->add_option("--target-mi-nats", model.target_mi, "Calibrate the correlation to this I(X;Y)");
    m->add_option("--rho", model.rho, "Correlation coefficient")->excludes(mi_opt);
    m->add_option("--grid", model.grid, "Points per axis");
    m->add_option("--nx", model.nx, "Points on the X axis (overrides --grid)");
    m->add_option("--ny", model.ny, "Points on the Y axis (overrides --grid)");
    m->add_option("--span", model.span, "Half-width of the grid in standard deviations")->check(CLI::PositiveNumber);
    m->add_option("--out", model.out, "Output file name");

    ExponentArgs expo;
    auto* e = app.add_subcommand("exponent", "Compute xi(R) and D(R) on a rate grid");
    e->add_option("--model", expo.model, "Model JSON")->required()->check(CLI::ExistingFile);
    e->add_option("--rates", expo.rates, "Rate grid (comma separated)")->required()->delimiter(',');
    e->add_option("--out", expo.out, "CSV file name");
    add_solver_flags(e, expo.solver);

    BoundsArgs bounds;
    auto* b = app.add_subcommand("bounds", "Feasibility interval on an n grid");
    add_point_flags(b, bounds.point);
    b->add_option("--regime", bounds.regime, "const:E, log, poly:P or superpoly:P");
    b->add_option("--n-grid", bounds.n_list, "Explicit n values (comma separated)")->delimiter(',');
    b->add_option("--n-min", bounds.n_min);
    b->add_option("--n-max", bounds.n_max);
    b->add_option("--n-step", bounds.n_step);
    b->add_option("--out", bounds.out, "CSV file name");

    CnsArgs cns;
    auto* c = app.add_subcommand("cns", "Critical number of samples");
    add_point_flags(c, cns.point);
    c->add_option("--regimes", cns.regimes, "Regimes (comma separated)")->delimiter(',');
    c->add_option("--deltas", cns.deltas, "Precisions (comma separated)")->delimiter(',');
    c->add_option("--cap", cns.cap, "Largest n searched")->check(CLI::PositiveNumber);
    c->add_option("--out", cns.out, "CSV file name");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Monte Carlo errors of a quantize-then-test scheme");
    s->add_option("--model", sim.model, "Model JSON")->required()->check(CLI::ExistingFile);
    s->add_option("--rate-bits", sim.rate_bits, "Rate in bits per sample (omit for the identity encoder)");
    s->add_option("--block-len", sim.block_len, "Block length l")->check(CLI::PositiveNumber);
    s->add_option("--n-grid", sim.n_list, "Sample sizes (comma separated)")->required()->delimiter(',');
    s->add_option("--regime", sim.regime, "Type I regime used to calibrate the threshold");
    s->add_option("--trials", sim.trials, "Evaluation trials per hypothesis")->check(CLI::PositiveNumber);
    s->add_option("--cal-trials", sim.cal_trials, "Calibration trials (default max(1e4, 100/eps))");
    s->add_option("--force-threshold", sim.force_threshold, "Use this threshold: a number, inf or -inf");
    s->add_option("--preset", sim.preset, "Named profile: full (2.5e6 trials)");
    s->add_option("--confidence", sim.confidence, "Wilson interval confidence")->check(CLI::Range(0.5, 0.999999));
    s->add_option("--workers", sim.workers, "Worker threads (0 = all cores)");
    s->add_option("--out", sim.out, "CSV file name");

    CLI11_PARSE(app, argc, argv);

    try {
        if (m->parsed()) return cmd_model(g, model);
        if (e->parsed()) return cmd_exponent(g, expo);
        if (b->parsed()) return cmd_bounds(g, bounds);
        if (c->parsed()) return cmd_cns(g, cns);
        if (s->parsed()) return cmd_simulate(g, sim);
    } catch (const CLI::Error& err) {
        return app.exit(err);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
    return 0;
}
