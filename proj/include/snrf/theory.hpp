#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snrf/linalg.hpp"
#include "snrf/matrix.hpp"

namespace snrf {

/// Quadratic loss around W_tgt on one m x n block:
///   L(W_tgt + D) - L(W_tgt) = <g, D> + 1/2 (mu_s ||P_S D||^2 + mu_perp ||P_perp D||^2)
/// where S is the first `s_size` rows. Every quantity of the loss-gap
/// analysis is closed-form here, so comparisons are exact up to rounding.
struct QuadraticScenario {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t s_size = 0;
    MatrixD gradient;
    MatrixD delta;
    double mu_s = 1.0;
    double mu_perp = 1.0;
    double epsilon = 0.0;
    double eta = 0.0;
    std::uint64_t seed = 0;

    MatrixD project_s(const MatrixD& m) const;
    MatrixD project_perp(const MatrixD& m) const;
};

/// Samples g and Delta from a seeded Gaussian, rescales the out-of-S part of g
/// to exactly epsilon * ||P_S g|| and, if the out-of-S alignment bound fails,
/// reflects Delta_perp across the P_perp g direction so it holds.
QuadraticScenario make_scenario(std::size_t rows, std::size_t cols, std::size_t s_size, double epsilon, double eta,
                                double mu_s, double mu_perp, std::uint64_t seed);

double exact_loss_delta(const QuadraticScenario& sc, const MatrixD& update, double beta);

// Best rank-r approximation of the masked delta P_S Delta.
MatrixD snrf_update(const QuadraticScenario& sc, std::size_t r);

struct BoundCheck {
    double beta = 0.0;
    std::size_t r = 0;
    double loss_lin = 0.0;
    double loss_snrf = 0.0;
    double gap = 0.0;  // loss_lin - loss_snrf
    double rhs = 0.0;  // lower bound on the gap, cubic remainder zero
    bool gap_holds = false;
    bool condition_holds = false;
    bool improvement_holds = false;
};

inline constexpr double kBoundSlack = 1e-9;

BoundCheck check_gap(const QuadraticScenario& sc, std::size_t r, double beta);

struct AssumptionFlags {
    bool gradient_concentrated = false;  // A1
    bool curvature_gap = false;          // A2
    bool alignment = false;              // A3
    bool best_low_rank = false;          // A4
    bool all() const { return gradient_concentrated && curvature_gap && alignment && best_low_rank; }
};

AssumptionFlags verify_assumptions(const QuadraticScenario& sc, std::size_t r, std::size_t candidates = 1000,
                                   std::uint64_t seed = 0);

struct SweepConfig {
    std::size_t scenarios = 500;
    std::size_t rows = 8;
    std::size_t cols = 6;
    std::size_t s_size = 4;
    double epsilon = 0.1;
    double eta = 0.5;
    double mu_s = 1.0;
    double mu_perp = 10.0;
    std::size_t rank = 2;
    std::vector<double> betas = {0.01, 0.05, 0.1};
    std::uint64_t seed = 0;

    void validate() const;
};

struct SweepRow {
    std::uint64_t seed = 0;
    BoundCheck check;
};

struct SweepSummary {
    std::size_t rows = 0;
    std::size_t gap_holds = 0;
    std::size_t condition_holds = 0;
    std::size_t improvement_holds = 0;
    std::size_t implication_violations = 0;  // condition holds but no improvement
    double gap_pass_rate() const { return rows == 0 ? 1.0 : static_cast<double>(gap_holds) / rows; }
};

// Scenario i uses seed cfg.seed + i; rows are ordered by scenario then beta.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);
SweepSummary summarize(const std::vector<SweepRow>& rows);

// CSV: seed,dims,s_size,epsilon,eta,mu_s,mu_perp,r,beta,gap,rhs,gap_holds,condition_holds,improvement_holds
std::string format_sweep_csv(const SweepConfig& cfg, const std::vector<SweepRow>& rows);

}  // namespace snrf
