#include "fixtures.hpp"

#include "radner/diffusion.hpp"
#include "radner/error.hpp"
#include "radner/expression.hpp"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

using namespace radner;
using fixtures::brownian;

TEST(Expression, CatalogValuesAndDerivatives) {
    const std::vector<double> x{0.5, -2.0};
    const double t = 0.3;
    EXPECT_EQ(Expr::constant(2.5)(t, x), 2.5);
    EXPECT_DOUBLE_EQ(Expr::affine(1.0, 3.0, 1)(t, x), -5.0);
    EXPECT_DOUBLE_EQ(Expr::affine(1.0, 3.0, 1).d_dx(1, t, x), 3.0);
    EXPECT_EQ(Expr::affine(1.0, 3.0, 1).d_dx(0, t, x), 0.0);
    EXPECT_DOUBLE_EQ(Expr::exp_affine(0.2, 0.4, 0)(t, x), std::exp(0.4));
    EXPECT_DOUBLE_EQ(Expr::exp_affine(0.2, 0.4, 0).d_dx(0, t, x), 0.4 * std::exp(0.4));

    // 1 + 2 x0^2 + (x1 - x1^3)
    const auto p = Expr::polynomial({{1.0, 0.0, 2.0}, {0.0, 1.0, 0.0, -1.0}});
    EXPECT_DOUBLE_EQ(p(t, x), 1.0 + 0.5 + (-2.0 + 8.0));
    EXPECT_DOUBLE_EQ(p.d_dx(0, t, x), 2.0);
    EXPECT_DOUBLE_EQ(p.d_dx(1, t, x), 1.0 - 12.0);

    const auto tp = Expr::time_poly({1.0, -2.0, 3.0});
    EXPECT_DOUBLE_EQ(tp(t, x), 1.0 - 0.6 + 0.27);
    EXPECT_NEAR(tp.d_dt(t, x), -0.2, 1e-15);
    EXPECT_TRUE(tp.depends_on_time());
    EXPECT_FALSE(p.depends_on_time());

    const auto prod = Expr::product({Expr::affine(0.0, 1.0, 0), tp});
    EXPECT_DOUBLE_EQ(prod(t, x), 0.5 * tp(t, x));
    EXPECT_DOUBLE_EQ(prod.d_dt(t, x), 0.5 * tp.d_dt(t, x));
    EXPECT_DOUBLE_EQ(prod.d_dx(0, t, x), tp(t, x));

    const auto sum = Expr::sum({Expr::constant(1.0), Expr::exp_affine(0.0, 1.0, 1)});
    EXPECT_DOUBLE_EQ(sum(t, x), 1.0 + std::exp(-2.0));
    EXPECT_EQ(sum.arity(), 2u);
}

TEST(Expression, DerivativesMatchDifferences) {
    const auto e = Expr::product({Expr::sum({Expr::polynomial({{0.0, 1.0, 0.5}, {1.0, 0.0, 0.0, 0.0, 0.1}}),
                                             Expr::time_poly({0.0, 1.0})}),
                                  Expr::exp_affine(-0.1, 0.3, 1)});
    const double t = 0.4, h = 1e-6;
    std::vector<double> x{0.7, -0.4};
    const double dt = (e(t + h, x) - e(t - h, x)) / (2 * h);
    EXPECT_NEAR(e.d_dt(t, x), dt, 1e-8);
    for (std::size_t i = 0; i < 2; ++i) {
        auto hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        EXPECT_NEAR(e.d_dx(i, t, x), (e(t, hi) - e(t, lo)) / (2 * h), 1e-8);
    }
}

TEST(Expression, RejectsOutOfCatalog) {
    EXPECT_THROW(Expr::polynomial({{0, 0, 0, 0, 0, 1}}), ConfigError);
    EXPECT_THROW(Expr::polynomial({}), ConfigError);
    EXPECT_THROW(Expr::sum({}), ConfigError);
    const std::vector<double> x{1.0};
    EXPECT_THROW(Expr::affine(0, 1, 2)(0.0, x), EvaluationError);
}

TEST(TimeGrid, UniformEndpointsExact) {
    const auto g = TimeGrid::uniform(7);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[6], 1.0);
    for (std::size_t k = 1; k < g.size(); ++k) EXPECT_GT(g[k], g[k - 1]);
    EXPECT_THROW(TimeGrid({0.0, 0.5, 0.5, 1.0}), ConfigError);
    EXPECT_THROW(TimeGrid({0.1, 1.0}), ConfigError);
    EXPECT_THROW(TimeGrid::uniform(1), ConfigError);
    EXPECT_EQ(g.interval_of(1.0), 5u);
    EXPECT_EQ(g.interval_of(0.5), 3u);
}

TEST(SpatialGrid, AroundContainsStartAndIsValid) {
    auto spec = brownian(0.5, 0.0, 2.0);
    const auto g = SpatialGrid::around(spec, 11);
    const std::vector<double> x0{2.0};
    EXPECT_TRUE(g.contains(x0));
    EXPECT_LE(g.lower(0), 2.0 - 4.0 + 1e-12);
    EXPECT_GE(g.upper(0), 2.0 + 4.0 - 1e-12);
    EXPECT_THROW(SpatialGrid({0.0}, {1.0}, {2}), ConfigError);
    EXPECT_THROW(SpatialGrid({1.0}, {0.0}, {5}), ConfigError);
}

TEST(ValidateCoefficients, IdentityVolatility) {
    auto spec = brownian();
    const auto r = validate_coefficients(spec, SpatialGrid::around(spec, 21), TimeGrid::uniform(5));
    EXPECT_FALSE(r.violation);
    EXPECT_DOUBLE_EQ(r.max_inverse_norm, 1.0);
    EXPECT_EQ(r.max_drift_norm, 0.0);
}

TEST(ValidateCoefficients, VanishingVolatilityFlagged) {
    auto spec = brownian();
    spec.volatility = {Expr::affine(0.0, 1.0, 0)};
    const auto r = validate_coefficients(spec, SpatialGrid({-1.0}, {1.0}, {21}), TimeGrid::uniform(5));
    EXPECT_TRUE(r.violation);
}

TEST(ValidateCoefficients, DiagonalNorm) {
    DiffusionSpec spec;
    spec.dimension = 2;
    spec.x0 = {0.0, 0.0};
    spec.drift = {Expr::constant(0.0), Expr::constant(0.0)};
    spec.volatility = {Expr::constant(1.0), Expr::constant(0.0), Expr::constant(0.0), Expr::constant(2.0)};
    spec.inverse_bound = 1.2;
    const auto r = validate_coefficients(spec, SpatialGrid::around(spec, 9), TimeGrid::uniform(3));
    EXPECT_FALSE(r.violation);
    EXPECT_NEAR(r.max_inverse_norm, std::sqrt(1.25), 1e-14);
    spec.inverse_bound = 1.1;
    EXPECT_TRUE(validate_coefficients(spec, SpatialGrid::around(spec, 9), TimeGrid::uniform(3)).violation);
}

TEST(ValidateCoefficients, NonFiniteRaises) {
    auto spec = brownian();
    spec.drift = {Expr::exp_affine(0.0, 800.0, 0)};
    EXPECT_THROW(validate_coefficients(spec, SpatialGrid({-1.0}, {2.0}, {5}), TimeGrid::uniform(3)),
                 EvaluationError);
}

TEST(SimulatePaths, BrownianMoments) {
    const std::size_t n = 20000;
    const auto b = simulate_paths(brownian(), TimeGrid::uniform(11), n, 99);
    std::vector<double> x1(n);
    for (std::size_t p = 0; p < n; ++p) {
        EXPECT_EQ(b.state(p, 0)[0], 0.0);
        x1[p] = b.terminal_state(p)[0];
    }
    EXPECT_LT(std::abs(fixtures::mean(x1)), 3.0 / std::sqrt(double(n)));
    // Var of a sample variance of N(0,1) is 2 / (n - 1).
    EXPECT_LT(std::abs(fixtures::variance(x1) - 1.0), 3.0 * std::sqrt(2.0 / double(n - 1)));

    std::vector<double> dw(n);
    for (std::size_t p = 0; p < n; ++p) dw[p] = b.increment(p, 4)[0];
    EXPECT_LT(std::abs(fixtures::variance(dw) - 0.1), 3.0 * 0.1 * std::sqrt(2.0 / double(n - 1)));
}

TEST(SimulatePaths, DeterministicDrift) {
    const auto tg = TimeGrid::uniform(17);
    const auto b = simulate_paths(brownian(0.0, 1.0), tg, 3, 5);
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t k = 0; k < tg.size(); ++k) EXPECT_NEAR(b.state(p, k)[0], tg[k], 1e-15);
}

TEST(SimulatePaths, ReproducibleAcrossThreadsAndPrefixes) {
    auto spec = brownian(0.7, 0.0);
    spec.drift = {Expr::affine(0.1, -0.5, 0)};
    const auto tg = TimeGrid::uniform(9);
    const auto a = simulate_paths(spec, tg, 300, 17, 1);
    const auto b = simulate_paths(spec, tg, 300, 17, 3);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.increments, b.increments);
    const auto c = simulate_paths(spec, tg, 100, 17, 2);
    for (std::size_t p = 0; p < 100; ++p)
        for (std::size_t k = 0; k < tg.size(); ++k) EXPECT_EQ(a.state(p, k)[0], c.state(p, k)[0]);
    const auto d = simulate_paths(spec, tg, 300, 18, 1);
    EXPECT_NE(a.states, d.states);
    EXPECT_THROW(simulate_paths(spec, tg, 0, 1), ConfigError);
}

TEST(SimulatePaths, EulerErrorShrinksUnderHalving) {
    // dx = -x dt from x0 = 1; exact x1 = e^{-1}.
    auto spec = brownian(0.0, 0.0, 1.0);
    spec.drift = {Expr::affine(0.0, -1.0, 0)};
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {5, 9, 17, 33, 65}) {
        const auto b = simulate_paths(spec, TimeGrid::uniform(n), 1, 1);
        const double err = std::abs(b.terminal_state(0)[0] - std::exp(-1.0));
        EXPECT_LT(err, prev);
        prev = err;
    }
}

TEST(PathIntegral, ConstantsAndLinearTime) {
    const auto tg = TimeGrid::uniform(11);
    const auto b = std::make_shared<PathBundle>(simulate_paths(brownian(), tg, 50, 3));
    const auto one = path_integral(*b, Expr::constant(1.0));
    const auto zero = path_integral(*b, Expr::constant(0.0));
    const auto lin = path_integral(*b, Expr::time_poly({0.0, 1.0}));
    for (std::size_t p = 0; p < 50; ++p) {
        for (std::size_t k = 0; k < tg.size(); ++k) {
            EXPECT_NEAR(one(p, k), tg[k], 1e-15);
            EXPECT_EQ(zero(p, k), 0.0);
        }
        EXPECT_NEAR(lin.terminal(p), 0.5, 1e-15);
    }
}

TEST(PathIntegral, LinearAndAdditive) {
    const auto tg = TimeGrid::uniform(21);
    const auto b = simulate_paths(brownian(), tg, 40, 8);
    const auto g1 = Expr::affine(0.3, 1.0, 0), g2 = Expr::exp_affine(0.0, 0.5, 0);
    const auto i1 = path_integral(b, g1), i2 = path_integral(b, g2);
    const auto i12 = path_integral(b, Expr::sum({g1, g2}));
    const ScalarField scaled = [&](double t, State x) { return 2.5 * g1(t, x); };
    const auto is = path_integral(b, scaled);
    for (std::size_t p = 0; p < 40; ++p) {
        for (std::size_t k = 0; k < tg.size(); ++k) {
            EXPECT_NEAR(i12(p, k), i1(p, k) + i2(p, k), 1e-13);
            EXPECT_NEAR(is(p, k), 2.5 * i1(p, k), 1e-13);
        }
        // Independent trapezoid sum, accumulated piece by piece.
        double acc = 0.0;
        for (std::size_t k = 1; k < tg.size(); ++k) {
            acc += 0.5 * tg.dt(k - 1) * (g1(tg[k - 1], b.state(p, k - 1)) + g1(tg[k], b.state(p, k)));
            EXPECT_NEAR(i1(p, k), acc, 1e-13);
        }
    }
}

TEST(PathIntegral, NonFiniteIntegrandRaises) {
    const auto b = simulate_paths(brownian(), TimeGrid::uniform(5), 4, 1);
    const ScalarField bad = [](double t, State) { return t > 0.5 ? std::numeric_limits<double>::infinity() : 0.0; };
    EXPECT_THROW(path_integral(b, bad), EvaluationError);
}
