#include "fixtures.hpp"

#include "radner/completeness.hpp"
#include "radner/negishi.hpp"
#include "radner/verifier.hpp"

#include <cmath>

#include <gtest/gtest.h>

using namespace radner;
using fixtures::agent;

namespace {

EconomySpec pair_economy() {
    auto e = fixtures::benchmark();
    e.h2 = Expr::affine(0.0, 0.2, 0);
    e.agents = {agent("log", UtilityFn::log(), 0.3), agent("crra", UtilityFn::crra(2.0), 0.7)};
    e.agents[0].terminal_share = Expr::constant(0.4);
    e.agents[1].terminal_share = Expr::constant(0.6);
    return e;
}

struct Solved {
    std::shared_ptr<const EconomySpec> econ;
    PrimitivePaths prim;
    WeightVector w;
    EquilibriumSolution sol;
};

Solved solve(EconomySpec e, std::size_t paths, bool equilibrium = true) {
    Solved s;
    s.econ = fixtures::shared(std::move(e));
    const auto tg = TimeGrid::uniform(41);
    s.prim = evaluate_primitives(*s.econ, std::make_shared<const PathBundle>(simulate_paths(s.econ->diffusion, tg,
                                                                                          paths, 13)));
    s.w = equilibrium ? solve_weights(*s.econ, s.prim).w : WeightVector::normalized(std::vector<double>(
                                                               s.econ->agents.size(), 1.0));
    s.sol = price_equilibrium(s.econ, s.w, tg, SpatialGrid::around(s.econ->diffusion, 401));
    return s;
}

const Solved& pair() {
    static const Solved s = solve(pair_economy(), 4000);
    return s;
}

} // namespace

TEST(Verifier, ClearingIsExactAndDetectsBias) {
    const auto& s = pair();
    auto alloc = allocate_paths(*s.econ, s.w, s.prim);
    const auto ok = check_clearing(*s.econ, s.prim, alloc);
    EXPECT_TRUE(ok.pass) << ok.detail;
    EXPECT_LT(ok.statistic, 1e-8);
    for (double& v : alloc.pi[1].values) v *= 1.0 + 1e-7;
    EXPECT_FALSE(check_clearing(*s.econ, s.prim, alloc).pass);
}

TEST(Verifier, BudgetHoldsOnlyAtEquilibriumWeights) {
    const auto& s = pair();
    const auto pp = price_path_set(s.sol, s.prim);
    const auto alloc = allocate_paths(*s.econ, s.w, s.prim);
    for (std::size_t m = 0; m < 2; ++m) {
        const auto r = check_budget(s.prim, alloc, pp, m);
        EXPECT_TRUE(r.pass) << r.detail;
        EXPECT_GT(r.standard_error, 0.0);
    }
    // Equal weights overfeed the poorer log agent.
    const auto off = solve(pair_economy(), 4000, false);
    const auto off_pp = price_path_set(off.sol, off.prim);
    const auto off_alloc = allocate_paths(*off.econ, off.w, off.prim);
    EXPECT_FALSE(check_budget(off.prim, off_alloc, off_pp, 0).pass);
}

TEST(Verifier, OptimalityAndAdRadner) {
    const auto& s = pair();
    auto alloc = allocate_paths(*s.econ, s.w, s.prim);
    for (std::size_t m = 0; m < 2; ++m) EXPECT_TRUE(check_optimality(*s.econ, s.w, s.prim, alloc, m).pass);
    auto pp = price_path_set(s.sol, s.prim);
    const auto ad = check_ad_radner(*s.econ, s.w, s.prim, pp);
    EXPECT_TRUE(ad.pass) << ad.statistic << " vs " << ad.tolerance;

    for (double& v : alloc.pi[0].values) v *= 1.001;
    EXPECT_FALSE(check_optimality(*s.econ, s.w, s.prim, alloc, 0).pass);
    for (double& v : pp.B.values) v *= 1.01;
    for (double& v : pp.B_left.values) v *= 1.01;
    EXPECT_FALSE(check_ad_radner(*s.econ, s.w, s.prim, pp).pass);
}

TEST(Verifier, MartingaleDetectsDrift) {
    const auto& s = pair();
    MartingaleConfig mc;
    mc.paths = 20000;
    const auto ok = check_martingale(s.sol, 0, mc);
    EXPECT_TRUE(ok.pass) << ok.detail;
    auto shifted = s.sol.stocks[0].s;
    const auto& tg = shifted.times();
    for (std::size_t k = 0; k < tg.size(); ++k)
        for (double& v : shifted.slice(k)) v += 0.1 * tg[k];
    EXPECT_FALSE(check_martingale(s.sol, 0, mc, &shifted).pass);
}

TEST(Verifier, HedgeClearing) {
    HedgeRatios a, b;
    a.H = {PathArray(3, 4)};
    b.H = {PathArray(3, 4)};
    for (std::size_t i = 0; i < a.H[0].values.size(); ++i) {
        a.H[0].values[i] = 0.1 * static_cast<double>(i);
        b.H[0].values[i] = -a.H[0].values[i];
    }
    a.max_abs = b.max_abs = 1.1;
    EXPECT_TRUE(check_hedge_clearing({a, b}, 1).pass);
    b.H[0].values[5] += 0.01;
    EXPECT_FALSE(check_hedge_clearing({a, b}, 1).pass);
}

TEST(Verifier, SuitePassesAndEveryControlIsDetected) {
    const auto& s = pair();
    const auto disp = dispersion(s.sol);
    ASSERT_TRUE(disp.pass);
    VerifyConfig cfg;
    cfg.martingale.paths = 20000;
    cfg.rank_ok = disp.pass;
    cfg.rank_threshold = disp.threshold;
    const auto suite = verify(s.sol, s.prim, cfg);
    for (const auto& c : suite.checks)
        EXPECT_TRUE(c.pass || c.skipped) << c.name << ": " << c.statistic << " vs " << c.tolerance;
    EXPECT_TRUE(suite.pass());
    EXPECT_GE(suite.controls.size(), 6u);
    for (const auto& c : suite.controls) EXPECT_TRUE(c.detected) << c.check << " / " << c.corruption;
    EXPECT_TRUE(suite.controls_detected());

    const auto j = to_json(suite);
    EXPECT_EQ(j["checks"].size(), suite.checks.size());
    EXPECT_TRUE(j["controls_detected"].get<bool>());
}

TEST(Verifier, BenchmarkSuite) {
    const auto s = solve(fixtures::benchmark(), 3000);
    VerifyConfig cfg;
    cfg.martingale.paths = 20000;
    cfg.hedges = false;
    const auto suite = verify(s.sol, s.prim, cfg);
    EXPECT_TRUE(suite.pass());
    EXPECT_TRUE(suite.controls_detected());
}
