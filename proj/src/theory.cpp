#include "snrf/theory.hpp"

#include <cmath>

#include "snrf/parallel.hpp"
#include "snrf/rng.hpp"
#include "text_util.hpp"

namespace snrf {

MatrixD QuadraticScenario::project_s(const MatrixD& m) const {
    MatrixD out = m;
    for (std::size_t i = s_size; i < out.rows(); ++i)
        for (double& v : out.row(i)) v = 0.0;
    return out;
}

MatrixD QuadraticScenario::project_perp(const MatrixD& m) const {
    MatrixD out = m;
    for (std::size_t i = 0; i < std::min(s_size, out.rows()); ++i)
        for (double& v : out.row(i)) v = 0.0;
    return out;
}

namespace {

void check_scenario_params(std::size_t rows, std::size_t cols, std::size_t s_size, double epsilon, double eta,
                           double mu_s, double mu_perp) {
    if (rows == 0 || cols == 0) throw ParameterError("scenario dimensions must be >= 1");
    if (s_size == 0 || s_size > rows) throw ParameterError("s_size must be in [1, rows]");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be finite and >= 0");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ParameterError("eta must be finite and >= 0");
    if (!(mu_s > 0.0) || !(mu_s <= mu_perp) || !std::isfinite(mu_perp)) {
        throw ParameterError("curvatures must satisfy 0 < mu_s <= mu_perp");
    }
}

}  // namespace

QuadraticScenario make_scenario(std::size_t rows, std::size_t cols, std::size_t s_size, double epsilon, double eta,
                                double mu_s, double mu_perp, std::uint64_t seed) {
    check_scenario_params(rows, cols, s_size, epsilon, eta, mu_s, mu_perp);
    QuadraticScenario sc;
    sc.rows = rows;
    sc.cols = cols;
    sc.s_size = s_size;
    sc.mu_s = mu_s;
    sc.mu_perp = mu_perp;
    sc.epsilon = epsilon;
    sc.eta = eta;
    sc.seed = seed;

    Rng rng(seed);
    sc.gradient = MatrixD(rows, cols);
    for (double& v : sc.gradient.data()) v = rng.normal();
    sc.delta = MatrixD(rows, cols);
    for (double& v : sc.delta.data()) v = rng.normal();

    const double g_s = frobenius_norm(sc.project_s(sc.gradient));
    const double g_perp = frobenius_norm(sc.project_perp(sc.gradient));
    const double scale = g_perp > 0.0 ? epsilon * g_s / g_perp : 0.0;
    for (std::size_t i = s_size; i < rows; ++i)
        for (double& v : sc.gradient.row(i)) v = epsilon == 0.0 ? 0.0 : v * scale;

    const MatrixD gp = sc.project_perp(sc.gradient);
    const MatrixD dp = sc.project_perp(sc.delta);
    const double gp2 = frobenius_norm_squared(gp);
    const double inner = frobenius_dot(gp, dp);
    if (gp2 > 0.0 && inner < -eta * std::sqrt(gp2) * frobenius_norm(dp)) {
        const double coef = 2.0 * inner / gp2;
        for (std::size_t i = s_size; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) sc.delta(i, j) -= coef * gp(i, j);
    }
    return sc;
}

double exact_loss_delta(const QuadraticScenario& sc, const MatrixD& update, double beta) {
    const double linear = frobenius_dot(sc.gradient, update);
    const double curv = sc.mu_s * frobenius_norm_squared(sc.project_s(update)) +
                        sc.mu_perp * frobenius_norm_squared(sc.project_perp(update));
    return beta * linear + 0.5 * beta * beta * curv;
}

MatrixD snrf_update(const QuadraticScenario& sc, std::size_t r) {
    const MatrixD masked = sc.project_s(sc.delta);
    return sc.project_s(truncate_rank(svd(masked, "masked scenario delta"), r));
}

BoundCheck check_gap(const QuadraticScenario& sc, std::size_t r, double beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ParameterError("beta must be finite and >= 0");
    BoundCheck b;
    b.beta = beta;
    b.r = r;
    const MatrixD update = snrf_update(sc, r);
    b.loss_lin = exact_loss_delta(sc, sc.delta, beta);
    b.loss_snrf = exact_loss_delta(sc, update, beta);
    b.gap = b.loss_lin - b.loss_snrf;

    const MatrixD delta_s = sc.project_s(sc.delta);
    const double perp2 = frobenius_norm_squared(sc.project_perp(sc.delta));
    const double trunc2 = frobenius_norm_squared(subtract(delta_s, update));
    const double leak = sc.epsilon * (1.0 + sc.eta) * frobenius_norm(sc.project_s(sc.gradient)) *
                        frobenius_norm(sc.delta);
    b.rhs = 0.5 * beta * beta * sc.mu_perp * perp2 - 0.5 * beta * beta * sc.mu_s * trunc2 - beta * leak;
    b.gap_holds = b.gap >= b.rhs - kBoundSlack;

    double leak_term = 0.0;
    if (leak > 0.0) leak_term = beta > 0.0 ? leak / beta : std::numeric_limits<double>::infinity();
    b.condition_holds = sc.mu_perp * perp2 > sc.mu_s * trunc2 + leak_term;
    b.improvement_holds = b.loss_snrf < b.loss_lin;
    return b;
}

AssumptionFlags verify_assumptions(const QuadraticScenario& sc, std::size_t r, std::size_t candidates,
                                   std::uint64_t seed) {
    AssumptionFlags f;
    const MatrixD gs = sc.project_s(sc.gradient);
    const MatrixD gp = sc.project_perp(sc.gradient);
    const MatrixD dp = sc.project_perp(sc.delta);
    f.gradient_concentrated = frobenius_norm(gp) <= sc.epsilon * frobenius_norm(gs) + kBoundSlack;
    f.curvature_gap = sc.mu_s > 0.0 && sc.mu_s <= sc.mu_perp;
    f.alignment = frobenius_dot(gp, dp) >= -sc.eta * frobenius_norm(gp) * frobenius_norm(dp) - kBoundSlack;

    const MatrixD delta_s = sc.project_s(sc.delta);
    const double svd_err = frobenius_norm(subtract(delta_s, snrf_update(sc, r)));
    const double sampled = best_random_rank_error(delta_s, r, candidates, seed);
    f.best_low_rank = svd_err <= sampled + kBoundSlack;
    return f;
}

void SweepConfig::validate() const {
    check_scenario_params(rows, cols, s_size, epsilon, eta, mu_s, mu_perp);
    if (scenarios == 0) throw ParameterError("need at least one scenario");
    if (rank == 0 || rank > std::min(rows, cols)) throw ParameterError("rank must be in [1, min(rows, cols)]");
    if (betas.empty()) throw ParameterError("need at least one beta");
    for (double b : betas) {
        if (!(b >= 0.0) || !std::isfinite(b)) throw ParameterError("betas must be finite and >= 0");
    }
}

std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
    cfg.validate();
    std::vector<SweepRow> rows(cfg.scenarios * cfg.betas.size());
    parallel_for(cfg.scenarios, [&](std::size_t i) {
        const std::uint64_t seed = cfg.seed + i;
        const auto sc =
            make_scenario(cfg.rows, cfg.cols, cfg.s_size, cfg.epsilon, cfg.eta, cfg.mu_s, cfg.mu_perp, seed);
        for (std::size_t b = 0; b < cfg.betas.size(); ++b) {
            rows[i * cfg.betas.size() + b] = {seed, check_gap(sc, cfg.rank, cfg.betas[b])};
        }
    });
    return rows;
}

SweepSummary summarize(const std::vector<SweepRow>& rows) {
    SweepSummary s;
    for (const auto& r : rows) {
        ++s.rows;
        s.gap_holds += r.check.gap_holds;
        s.condition_holds += r.check.condition_holds;
        s.improvement_holds += r.check.improvement_holds;
        s.implication_violations += r.check.condition_holds && !r.check.improvement_holds;
    }
    return s;
}

std::string format_sweep_csv(const SweepConfig& cfg, const std::vector<SweepRow>& rows) {
    using detail::format_double;
    std::string out =
        "seed,dims,s_size,epsilon,eta,mu_s,mu_perp,r,beta,gap,rhs,gap_holds,condition_holds,improvement_holds\n";
    const std::string dims = std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols);
    const std::string fixed = dims + "," + std::to_string(cfg.s_size) + "," + format_double(cfg.epsilon) + "," +
                              format_double(cfg.eta) + "," + format_double(cfg.mu_s) + "," +
                              format_double(cfg.mu_perp) + "," + std::to_string(cfg.rank) + ",";
    for (const auto& r : rows) {
        const auto& c = r.check;
        out += std::to_string(r.seed) + "," + fixed + format_double(c.beta) + "," + format_double(c.gap) + "," +
               format_double(c.rhs) + "," + (c.gap_holds ? "1" : "0") + "," + (c.condition_holds ? "1" : "0") + "," +
               (c.improvement_holds ? "1" : "0") + "\n";
    }
    return out;
}

}  // namespace snrf
