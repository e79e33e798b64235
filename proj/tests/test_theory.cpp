#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracle.hpp"
#include "snrf/error.hpp"
#include "snrf/theory.hpp"

using namespace snrf;

TEST(Quadratic, ExactLossMatchesCoordinateSum) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto sc = make_scenario(6, 5, 3, 0.2, 0.4, 1.0, 4.0, seed);
        for (double beta : {0.0, 0.01, 0.3, 1.0}) {
            EXPECT_NEAR(exact_loss_delta(sc, sc.delta, beta), oracle::quadratic_loss(sc, sc.delta, beta), 1e-12);
            const MatrixD u = snrf_update(sc, 2);
            EXPECT_NEAR(exact_loss_delta(sc, u, beta), oracle::quadratic_loss(sc, u, beta), 1e-12);
        }
    }
}

TEST(Quadratic, ScenariosSatisfyAllAssumptions) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto sc = make_scenario(8, 6, 4, 0.1, 0.5, 1.0, 10.0, seed);
        const auto flags = verify_assumptions(sc, 2, 300, seed);
        EXPECT_TRUE(flags.gradient_concentrated) << seed;
        EXPECT_TRUE(flags.curvature_gap) << seed;
        EXPECT_TRUE(flags.alignment) << seed;
        EXPECT_TRUE(flags.best_low_rank) << seed;
        const double gs = frobenius_norm(sc.project_s(sc.gradient));
        EXPECT_NEAR(frobenius_norm(sc.project_perp(sc.gradient)), 0.1 * gs, 1e-12 * gs);
    }
}

TEST(Quadratic, SnrfUpdateLivesInSAndHasRankR) {
    const auto sc = make_scenario(8, 6, 4, 0.1, 0.5, 1.0, 10.0, 3);
    for (std::size_t r = 1; r <= 4; ++r) {
        const MatrixD u = snrf_update(sc, r);
        EXPECT_EQ(frobenius_norm(sc.project_perp(u)), 0.0);
        EXPECT_EQ(numerical_rank(svd(u)), r);
    }
    const MatrixD full = snrf_update(sc, 4);
    EXPECT_LT(frobenius_norm(subtract(full, sc.project_s(sc.delta))), 1e-12);
}

TEST(Quadratic, GapAndRhsFormulas) {
    const auto sc = make_scenario(8, 6, 4, 0.1, 0.5, 1.0, 10.0, 9);
    const double beta = 0.05;
    const auto b = check_gap(sc, 2, beta);
    const MatrixD u = snrf_update(sc, 2);
    EXPECT_NEAR(b.gap, oracle::quadratic_loss(sc, sc.delta, beta) - oracle::quadratic_loss(sc, u, beta), 1e-12);
    const double perp2 = oracle::frobenius_sq(oracle::grid(sc.project_perp(sc.delta)));
    const double trunc2 = oracle::diff_sq(oracle::grid(sc.project_s(sc.delta)), oracle::grid(u));
    const double leak = 0.1 * 1.5 * frobenius_norm(sc.project_s(sc.gradient)) * frobenius_norm(sc.delta);
    EXPECT_NEAR(b.rhs, beta * beta / 2 * (10.0 * perp2 - trunc2) - beta * leak, 1e-12);
    EXPECT_EQ(b.condition_holds, 10.0 * perp2 > trunc2 + leak / beta);
    EXPECT_EQ(b.improvement_holds, b.loss_snrf < b.loss_lin);
}

TEST(Quadratic, DominantCurvatureScenarioImproves) {
    // mu_perp >> mu_s, large Delta_perp, no gradient leakage.
    auto sc = make_scenario(8, 6, 4, 0.0, 0.0, 1.0, 1000.0, 5);
    for (std::size_t i = 4; i < 8; ++i)
        for (double& v : sc.delta.row(i)) v *= 10.0;
    for (double beta : {0.01, 0.05, 0.1}) {
        const auto b = check_gap(sc, 2, beta);
        EXPECT_TRUE(b.condition_holds) << beta;
        EXPECT_TRUE(b.improvement_holds) << beta;
        EXPECT_TRUE(b.gap_holds) << beta;
    }
}

TEST(Quadratic, BoundIsExactWithoutLeakage) {
    // No leakage and r = |S|: the update is exactly P_S Delta and gap == rhs.
    const auto sc = make_scenario(8, 6, 4, 0.0, 0.0, 1.0, 10.0, 2);
    const auto b = check_gap(sc, 4, 0.1);
    const double perp2 = frobenius_norm_squared(sc.project_perp(sc.delta));
    EXPECT_NEAR(b.gap, 0.5 * 0.01 * 10.0 * perp2, 1e-12);
    EXPECT_NEAR(b.rhs, b.gap, 1e-12);
    EXPECT_TRUE(b.gap_holds);
}

TEST(Quadratic, RejectsBadParameters) {
    EXPECT_THROW(make_scenario(0, 6, 1, 0.1, 0.5, 1, 10, 0), ParameterError);
    EXPECT_THROW(make_scenario(8, 6, 9, 0.1, 0.5, 1, 10, 0), ParameterError);
    EXPECT_THROW(make_scenario(8, 6, 4, -0.1, 0.5, 1, 10, 0), ParameterError);
    EXPECT_THROW(make_scenario(8, 6, 4, 0.1, 0.5, 10, 1, 0), ParameterError);
    const auto sc = make_scenario(8, 6, 4, 0.1, 0.5, 1, 10, 0);
    EXPECT_THROW(check_gap(sc, 2, -0.1), ParameterError);
    SweepConfig cfg;
    cfg.rank = 7;
    EXPECT_THROW(cfg.validate(), ParameterError);
    cfg = SweepConfig{};
    cfg.betas.clear();
    EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Sweep, RowsSeedsAndCsvShape) {
    SweepConfig cfg;
    cfg.scenarios = 12;
    cfg.seed = 40;
    const auto rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 36u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].seed, 40 + i / 3);
        EXPECT_EQ(rows[i].check.beta, cfg.betas[i % 3]);
    }
    const std::string csv = format_sweep_csv(cfg, rows);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "seed,dims,s_size,epsilon,eta,mu_s,mu_perp,r,beta,gap,rhs,gap_holds,condition_holds,improvement_holds");
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 13);
    }
    EXPECT_EQ(n, 36u);
    EXPECT_EQ(format_sweep_csv(cfg, run_sweep(cfg)), csv);

    const auto s = summarize(rows);
    EXPECT_EQ(s.rows, 36u);
    std::size_t v = 0;
    for (const auto& r : rows) v += r.check.condition_holds && !r.check.improvement_holds;
    EXPECT_EQ(s.implication_violations, v);
}

TEST(Quadratic, TrivialScenarioShapes) {
    const auto flat = make_scenario(8, 6, 4, 0.0, 0.5, 1.0, 10.0, 1);
    EXPECT_EQ(frobenius_norm(flat.project_perp(flat.gradient)), 0.0);

    const auto all_s = make_scenario(8, 6, 8, 0.1, 0.5, 1.0, 10.0, 1);
    EXPECT_EQ(frobenius_norm(all_s.project_perp(all_s.delta)), 0.0);

    const auto sc17 = make_scenario(8, 6, 4, 0.1, 0.5, 1.0, 10.0, 17);
    EXPECT_TRUE(verify_assumptions(sc17, 2).all());
    EXPECT_EQ(sc17.gradient, make_scenario(8, 6, 4, 0.1, 0.5, 1.0, 10.0, 17).gradient);
}

TEST(Quadratic, LossIsExactlyQuadraticInBeta) {
    const auto sc = make_scenario(8, 6, 4, 0.1, 0.5, 1.0, 10.0, 23);
    EXPECT_EQ(exact_loss_delta(sc, MatrixD(8, 6), 0.3), 0.0);
    EXPECT_EQ(exact_loss_delta(sc, sc.delta, 0.0), 0.0);
    const double beta = 0.07;
    const double dhd = sc.mu_s * frobenius_norm_squared(sc.project_s(sc.delta)) +
                       sc.mu_perp * frobenius_norm_squared(sc.project_perp(sc.delta));
    const double lhs = exact_loss_delta(sc, sc.delta, 2 * beta) - 2 * exact_loss_delta(sc, sc.delta, beta);
    EXPECT_NEAR(lhs, beta * beta * dhd, 1e-10);
    const double want = oracle::quadratic_loss(sc, sc.delta, beta);
    EXPECT_NEAR(exact_loss_delta(sc, sc.delta, beta), want, 1e-10 * std::abs(want));
}

TEST(Quadratic, DegenerateEqualityWithoutPerpComponent) {
    // S is everything, so Delta_perp = 0; full rank and no leakage leave gap = rhs = 0.
    const auto sc = make_scenario(6, 4, 6, 0.0, 0.0, 1.0, 10.0, 4);
    const auto b = check_gap(sc, 4, 0.1);
    EXPECT_NEAR(b.gap, 0.0, 1e-12);
    EXPECT_NEAR(b.rhs, 0.0, 1e-12);
    EXPECT_TRUE(b.gap_holds);
}
