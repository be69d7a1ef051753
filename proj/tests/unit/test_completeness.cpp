#include "fixtures.hpp"

#include "radner/completeness.hpp"
#include "radner/error.hpp"

#include <cmath>

#include <gtest/gtest.h>

using namespace radner;
using fixtures::agent;

namespace {

EquilibriumSolution solve(EconomySpec e, std::size_t nt, std::size_t nx, WeightVector w = WeightVector({1.0})) {
    auto econ = fixtures::shared(std::move(e));
    return price_equilibrium(econ, w, TimeGrid::uniform(nt), SpatialGrid::around(econ->diffusion, nx));
}

EconomySpec two_factor() {
    EconomySpec e;
    e.diffusion.dimension = 2;
    e.diffusion.x0 = {0.0, 0.0};
    e.diffusion.drift = {Expr::constant(0.0), Expr::constant(0.0)};
    e.diffusion.volatility = {Expr::constant(1.0), Expr::constant(0.0), Expr::constant(0.3), Expr::constant(0.8)};
    e.diffusion.inverse_bound = 1.7;
    e.H = Expr::constant(0.0);
    e.stocks = {{"a", Expr::affine(0.0, 1.0, 0)},
                {"b", Expr::sum({Expr::affine(0.0, 1.0, 0), Expr::affine(0.0, 1.0, 1)})}};
    e.agents = {agent("log", UtilityFn::log(), 1.0)};
    return e;
}

} // namespace

TEST(Dispersion, BenchmarkIsUnit) {
    const auto sol = solve(fixtures::benchmark(), 101, 201);
    const auto r = dispersion(sol);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.failures, 0u);
    EXPECT_GT(r.evaluated, 0u);
    EXPECT_NEAR(r.core_min_sigma, 1.0, 1e-3);
    EXPECT_NEAR(r.core_max_sigma, 1.0, 1e-3);
}

TEST(Dispersion, ConstantClaimFailsEverywhere) {
    auto e = fixtures::benchmark();
    e.stocks[0].F = Expr::constant(1.0);
    const auto r = dispersion(solve(e, 41, 101));
    EXPECT_FALSE(r.pass);
    EXPECT_GT(r.failure_fraction, 0.999);
    EXPECT_FALSE(r.first_failures.empty());
}

TEST(Dispersion, ScalesWithClaim) {
    auto e = fixtures::benchmark();
    e.stocks[0].F = Expr::affine(0.0, 3.0, 0);
    const auto r = dispersion(solve(e, 51, 201));
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.core_min_sigma, 3.0, 3e-3);
    // The failure threshold follows the scale of the surfaces.
    const auto base = dispersion(solve(fixtures::benchmark(), 51, 201));
    EXPECT_NEAR(r.threshold / base.threshold, 3.0, 1e-6);
}

TEST(Dispersion, TwoFactorMatchesClaimJacobian) {
    // Constant income: s^j = F^j, so D = grad F^T sigma = [[1, 0], [1.3, 0.8]].
    const auto sol = solve(two_factor(), 11, 41);
    const auto r = dispersion(sol);
    ASSERT_TRUE(r.pass);
    const auto& sg = sol.v.space();
    std::vector<double> x(2);
    const std::size_t k = sol.v.times().size() - 2;
    std::size_t checked = 0;
    for (std::size_t n = 0; n < sg.node_count(); ++n) {
        sg.node_state(n, x);
        if (sg.is_boundary(n) || !sg.in_core(x)) continue;
        const double* D = r.matrix(k, n);
        EXPECT_NEAR(D[0], 1.0, 1e-9);
        EXPECT_NEAR(D[1], 0.0, 1e-9);
        EXPECT_NEAR(D[2], 1.3, 1e-9);
        EXPECT_NEAR(D[3], 0.8, 1e-9);
        ++checked;
    }
    EXPECT_GT(checked, 100u);
    // Smallest singular value of [[1, 0], [1.3, 0.8]].
    const double tr = 1.0 + 1.69 + 0.64, det = 0.8;
    EXPECT_NEAR(r.core_min_sigma, std::sqrt(0.5 * (tr - std::sqrt(tr * tr - 4.0 * det * det))), 1e-9);
}

TEST(Probe, RefusesFailedDispersion) {
    auto e = fixtures::benchmark();
    e.stocks[0].F = Expr::constant(1.0);
    const auto sol = solve(e, 21, 101);
    const auto r = dispersion(sol);
    ProbeConfig cfg;
    cfg.paths = 10;
    EXPECT_THROW(martingale_uniqueness_probe(sol, r, cfg), CompletenessError);
}

TEST(Probe, ReplicatesQuadraticClaim) {
    const auto sol = solve(fixtures::benchmark(), 200, 400);
    const auto r = dispersion(sol);
    ProbeConfig cfg;
    cfg.claims = {Expr::polynomial({{0.0, 0.0, 1.0}})};
    cfg.random_claims = 0;
    cfg.paths = 2000;
    const auto p = martingale_uniqueness_probe(sol, r, cfg);
    ASSERT_EQ(p.claims.size(), 1u);
    EXPECT_TRUE(p.pass);
    EXPECT_LT(p.claims[0].relative_rms, 0.01);
    // c(0, 0) = E^Q[X_1^2] with X_1 ~ N(-1, 1) under the pricing measure.
    EXPECT_NEAR(p.claims[0].value0, 2.0, 2e-3);
}

TEST(Probe, StockReplicatesItself) {
    const auto sol = solve(fixtures::benchmark(), 101, 201);
    ProbeConfig cfg;
    cfg.claims = {Expr::affine(0.0, 1.0, 0)};
    cfg.random_claims = 0;
    cfg.paths = 500;
    const auto p = martingale_uniqueness_probe(sol, dispersion(sol), cfg);
    EXPECT_NEAR(p.claims[0].value0, -1.0, 2e-3);
    EXPECT_LT(p.claims[0].relative_rms, 1e-3);
}
