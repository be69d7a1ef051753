#include "fixtures.hpp"

#include "radner/economy.hpp"
#include "radner/error.hpp"
#include "radner/parallel.hpp"

#include <cmath>

#include <gtest/gtest.h>

using namespace radner;
using fixtures::agent;

namespace {

std::shared_ptr<const PathBundle> bundle(const EconomySpec& e, std::size_t n, std::size_t nt = 11,
                                         std::uint64_t seed = 3) {
    return std::make_shared<const PathBundle>(simulate_paths(e.diffusion, TimeGrid::uniform(nt), n, seed));
}

EconomySpec three_agents() {
    auto e = fixtures::benchmark();
    e.h1 = Expr::time_poly({0.1, 0.2});
    e.h2 = Expr::affine(0.0, 0.3, 0);
    e.agents = {agent("a", UtilityFn::log(), 0.1), agent("b", UtilityFn::crra(2.0), 0.3),
                agent("c", UtilityFn::crra(0.5), 0.6)};
    // Shares that depend on the state still sum to one.
    e.agents[0].rate_share = Expr::sum({Expr::constant(0.1), Expr::affine(0.0, 0.0, 0)});
    return e;
}

} // namespace

TEST(SplitByShares, LeftFoldSumIsExact) {
    const std::vector<double> shares{0.1, 0.3, 0.6};
    std::vector<double> out(3);
    for (double total : {1e-9, 0.3, 1.0, 7.77, 1e12}) {
        split_by_shares(total, shares, out);
        EXPECT_EQ((out[0] + out[1]) + out[2], total);
        EXPECT_NEAR(out[1] / total, 0.3, 1e-15);
    }
}

TEST(Primitives, UnitNotionalWithoutRates) {
    const auto e = fixtures::benchmark();
    const auto prim = evaluate_primitives(e, bundle(e, 200));
    for (double psi : prim.psi) EXPECT_EQ(psi, 1.0);
}

TEST(Primitives, NoDividendRateLeavesTerminalDividend) {
    auto e = fixtures::benchmark();
    e.stocks[0].p = Expr::constant(0.3);
    e.G = Expr::exp_affine(0.0, 0.1, 0);
    const auto b = bundle(e, 100);
    const auto prim = evaluate_primitives(e, b);
    for (std::size_t p = 0; p < 100; ++p) {
        for (std::size_t k = 0; k < prim.n_times(); ++k) EXPECT_EQ(prim.theta[0](p, k), 0.0);
        const double x1 = b->terminal_state(p)[0];
        EXPECT_NEAR(prim.Theta[0][p], std::exp(0.1 * x1) * x1 * std::exp(0.3), 1e-13 * (1 + std::abs(x1)));
    }
}

TEST(Primitives, LognormalTerminalEndowment) {
    const auto e = fixtures::benchmark();
    const auto prim = evaluate_primitives(e, bundle(e, 40000, 5, 11));
    const auto est = mc_estimate(prim.Lambda);
    EXPECT_LT(std::abs(est.mean - std::exp(0.5)), 3.0 * est.std_error);
}

TEST(Primitives, SharesSumExactly) {
    const auto e = three_agents();
    const auto prim = evaluate_primitives(e, bundle(e, 300));
    for (std::size_t p = 0; p < 300; ++p) {
        for (std::size_t k = 0; k < prim.n_times(); ++k) {
            double s = 0.0;
            for (std::size_t m = 0; m < 3; ++m) s += prim.lambda_m[m](p, k);
            EXPECT_EQ(s, prim.lambda(p, k));
            EXPECT_GT(prim.lambda(p, k), 0.0);
        }
        double S = 0.0;
        for (std::size_t m = 0; m < 3; ++m) S += prim.Lambda_m[m][p];
        EXPECT_EQ(S, prim.Lambda[p]);
        EXPECT_GT(prim.Lambda[p], 0.0);
    }
}

TEST(Primitives, DividendTwoWays) {
    // D_1 from the stored theta and Theta against a direct pathwise
    // evaluation of f e^{int p} and G F e^{int p}.
    auto e = fixtures::benchmark();
    e.stocks[0].f = Expr::exp_affine(-1.0, 0.2, 0);
    e.stocks[0].p = Expr::affine(0.05, 0.1, 0);
    e.stocks[0].F = Expr::exp_affine(0.0, 1.0, 0);
    const auto b = bundle(e, 50, 41);
    const auto prim = evaluate_primitives(e, b);
    const auto ip = path_integral(*b, e.stocks[0].p);
    const auto& tg = b->times;
    for (std::size_t p = 0; p < 50; ++p) {
        double incremental = 0.0, direct = 0.0;
        for (std::size_t k = 1; k < tg.size(); ++k) {
            incremental += 0.5 * tg.dt(k - 1) * (prim.theta[0](p, k - 1) + prim.theta[0](p, k));
            auto theta = [&](std::size_t i) { return e.stocks[0].f(tg[i], b->state(p, i)) * std::exp(ip(p, i)); };
            direct += 0.5 * tg.dt(k - 1) * (theta(k - 1) + theta(k));
        }
        incremental += prim.Theta[0][p];
        direct += std::exp(b->terminal_state(p)[0]) * std::exp(ip.terminal(p));
        EXPECT_NEAR(incremental, direct, 1e-12 * std::abs(direct));
    }
}

TEST(Primitives, NonpositiveNotionalRaises) {
    auto e = fixtures::benchmark();
    e.G = Expr::affine(0.0, 1.0, 0);
    EXPECT_THROW(evaluate_primitives(e, bundle(e, 100)), PrimitiveError);
}

TEST(Primitives, AgentWithoutIncomeRaises) {
    auto e = fixtures::benchmark();
    e.agents = {agent("rich", UtilityFn::log(), 1.0), agent("poor", UtilityFn::log(), 0.0)};
    EXPECT_THROW(evaluate_primitives(e, bundle(e, 20)), PrimitiveError);
}

TEST(Assumptions, LinearClaimHasFullRank) {
    const auto e = fixtures::benchmark();
    const auto r = validate_assumptions(e, SpatialGrid::around(e.diffusion, 41), TimeGrid::uniform(5));
    EXPECT_NEAR(r.min_singular_value, 1.0, 1e-9);
    EXPECT_EQ(r.rank_failure_fraction, 0.0);
    EXPECT_TRUE(r.rank_pass);
    EXPECT_TRUE(r.ok());
}

TEST(Assumptions, ConstantClaimFailsRank) {
    auto e = fixtures::benchmark();
    e.stocks[0].F = Expr::constant(1.0);
    const auto r = validate_assumptions(e, SpatialGrid::around(e.diffusion, 41), TimeGrid::uniform(5));
    EXPECT_EQ(r.rank_failure_fraction, 1.0);
    EXPECT_FALSE(r.rank_pass);
    EXPECT_FALSE(r.ok());
}

TEST(Assumptions, TwoFactorUnitDeterminant) {
    EconomySpec e;
    e.diffusion.dimension = 2;
    e.diffusion.x0 = {0.0, 0.0};
    e.diffusion.drift = {Expr::constant(0.0), Expr::constant(0.0)};
    e.diffusion.volatility = {Expr::constant(1.0), Expr::constant(0.0), Expr::constant(0.0), Expr::constant(1.0)};
    e.stocks = {{"a", Expr::affine(0.0, 1.0, 0)},
                {"b", Expr::sum({Expr::affine(0.0, 1.0, 0), Expr::affine(0.0, 1.0, 1)})}};
    e.agents = {agent("log", UtilityFn::log(), 1.0)};
    const auto r = validate_assumptions(e, SpatialGrid::around(e.diffusion, 11), TimeGrid::uniform(3));
    EXPECT_TRUE(r.rank_pass);
    // Singular values of [[1, 0], [1, 1]]: the smaller is (sqrt 5 - 1) / 2.
    EXPECT_NEAR(r.min_singular_value, (std::sqrt(5.0) - 1.0) / 2.0, 1e-8);

    e.stocks.pop_back();
    EXPECT_THROW(validate_assumptions(e, SpatialGrid::around(e.diffusion, 11), TimeGrid::uniform(3)), ConfigError);
}

TEST(Assumptions, SharesAndRates) {
    auto e = three_agents();
    e.r = Expr::constant(0.04);
    e.q = Expr::affine(0.01, 0.0, 0);
    auto r = validate_assumptions(e, SpatialGrid::around(e.diffusion, 21), TimeGrid::uniform(5));
    EXPECT_TRUE(r.shares_valid);
    EXPECT_TRUE(r.rates_bounded);
    EXPECT_DOUBLE_EQ(r.r_min, 0.04);
    EXPECT_DOUBLE_EQ(r.r_max, 0.04);
    e.agents[2].terminal_share = Expr::constant(0.5);
    r = validate_assumptions(e, SpatialGrid::around(e.diffusion, 21), TimeGrid::uniform(5));
    EXPECT_FALSE(r.shares_valid);
}

TEST(EconomySpec, ShapeChecks) {
    auto e = fixtures::benchmark();
    EXPECT_NO_THROW(e.check());
    e.H = Expr::affine(0.0, 1.0, 1);
    EXPECT_THROW(e.check(), ConfigError);
    e = fixtures::benchmark();
    e.h2 = Expr::time_poly({0.0, 1.0});
    EXPECT_THROW(e.check(), ConfigError);
    e = fixtures::benchmark();
    e.agents.clear();
    EXPECT_THROW(e.check(), ConfigError);
}
