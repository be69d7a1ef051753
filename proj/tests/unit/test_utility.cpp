#include "radner/error.hpp"
#include "radner/utility.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

using namespace radner;

namespace {

const std::vector<double> x0{0.0};
const State X0{x0};

// u_c of e^{nu(t)} g(x) (c^{1-a}-1)/(1-a), written out by hand.
double crra_uc(double a, double nu, double g, double c) { return std::exp(nu) * g * std::pow(c, -a); }

// Composite marginal by central differences of the composite value.
double fd_uc(const UtilityFn& u, double t, double c, State x, double h) {
    return (u.u(t, c + h, x) - u.u(t, c - h, x)) / (2 * h);
}

double fd_ucc(const UtilityFn& u, double t, double c, State x, double h) {
    return (u.u_c(t, c + h, x) - u.u_c(t, c - h, x)) / (2 * h);
}

double fd_uct(const UtilityFn& u, double t, double c, State x, double h) {
    return (u.u_c(t + h, c, x) - u.u_c(t - h, c, x)) / (2 * h);
}

double fd_ucx(const UtilityFn& u, double t, double c, State x, double h) {
    std::vector<double> lo(x.begin(), x.end()), hi(x.begin(), x.end());
    lo[0] -= h;
    hi[0] += h;
    return (u.u_c(t, c, hi) - u.u_c(t, c, lo)) / (2 * h);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// A split with c1 + c2 == c exactly can only move the smaller part in steps
// of ulp(c); the marginals then move by ulp(c) / (risk tolerance).
double rounding_bound(const UtilityFn& u1, const UtilityFn& u2, double t, double c1, double c2, State x,
                      double c) {
    const double ulp = std::nextafter(c, 2 * c) - c;
    return 2 * ulp * (1 / u1.tolerance(t, c1, x) + 1 / u2.tolerance(t, c2, x));
}

UtilityFn time_state_crra(double a, double nu1, double gb) {
    return UtilityFn::crra(a, Expr::time_poly({0.0, nu1}), Expr::exp_affine(0.0, gb, 0));
}

} // namespace

TEST(Utility, CrraMatchesClosedForm) {
    const auto u = time_state_crra(2.5, -0.3, 0.4);
    const std::vector<double> x{0.7};
    for (double c : {0.01, 0.5, 1.0, 3.0, 200.0}) {
        const double t = 0.4;
        EXPECT_LT(rel(u.u_c(t, c, x), crra_uc(2.5, -0.3 * t, std::exp(0.4 * 0.7), c)), 1e-13);
        EXPECT_LT(rel(u.risk_aversion(t, c, x), 2.5), 1e-13);
        const double value = std::exp(-0.3 * t) * std::exp(0.28) * (std::pow(c, -1.5) - 1.0) / -1.5;
        EXPECT_LT(rel(u.u(t, c, x), value), 1e-12);
    }
}

TEST(Utility, LogIsCrraOne) {
    const auto u = UtilityFn::log();
    for (double c : {1e-6, 0.3, 1.0, 7.0}) {
        EXPECT_NEAR(u.u(0.5, c, X0), std::log(c), 1e-14);
        EXPECT_NEAR(u.u_c(0.5, c, X0), 1.0 / c, 1e-14 / c);
        EXPECT_NEAR(u.risk_aversion(0.5, c, X0), 1.0, 1e-14);
    }
}

TEST(Utility, RejectsBadParameters) {
    EXPECT_THROW(UtilityFn::crra(0.0), ConfigError);
    EXPECT_THROW(UtilityFn::crra(-1.0), ConfigError);
    EXPECT_THROW(scale(0.0, UtilityFn::log()), ConfigError);
    EXPECT_THROW(UtilityFn::log().u(0.0, 0.0, X0), EvaluationError);
    const auto bad_g = UtilityFn::crra(2.0, Expr::constant(0.0), Expr::affine(0.0, 1.0, 0));
    const std::vector<double> neg{-1.0};
    EXPECT_THROW(bad_g.u_c(0.0, 1.0, neg), EvaluationError);
}

TEST(Split, SymmetricLogs) {
    const auto [c1, c2] = split(UtilityFn::log(), UtilityFn::log(), 0.0, 2.0, X0);
    EXPECT_DOUBLE_EQ(c1, 1.0);
    EXPECT_DOUBLE_EQ(c2, 1.0);
}

TEST(Split, WeightedLogsClosedForm) {
    for (auto [w1, w2, c] : {std::tuple{0.3, 0.7, 1.0}, {0.01, 0.99, 5.0}, {2.0, 3.0, 0.2}}) {
        const auto [c1, c2] = split(scale(w1, UtilityFn::log()), scale(w2, UtilityFn::log()), 0.3, c, X0);
        EXPECT_LT(rel(c1, c * w1 / (w1 + w2)), 1e-12);
        EXPECT_EQ(c1 + c2, c);
    }
}

TEST(Split, EqualRiskAversionClosedForm) {
    for (double a : {0.5, 2.0, 5.0}) {
        const double w1 = 0.2, w2 = 0.8, c = 3.0;
        const auto u1 = scale(w1, UtilityFn::crra(a)), u2 = scale(w2, UtilityFn::crra(a));
        const auto [c1, c2] = split(u1, u2, 0.5, c, X0);
        const double exact = c * std::pow(w1, 1 / a) / (std::pow(w1, 1 / a) + std::pow(w2, 1 / a));
        EXPECT_LT(rel(c1, exact), 1e-10) << "a=" << a;
        EXPECT_EQ(c1 + c2, c);
    }
}

TEST(Split, FocResidualOnRandomProbes) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ua(0.3, 4.0), unu(-1.0, 1.0), ug(-0.5, 0.5), ulogc(-7.0, 7.0),
        ut(0.0, 1.0), ux(-2.0, 2.0), uw(0.01, 1.0);
    int strict = 0;
    for (int i = 0; i < 1000; ++i) {
        const double a1 = ua(rng), a2 = ua(rng);
        const auto u1 = scale(uw(rng), time_state_crra(a1, unu(rng), ug(rng)));
        const auto u2 = scale(uw(rng), time_state_crra(a2, unu(rng), ug(rng)));
        const double t = ut(rng), c = std::exp(ulogc(rng));
        const std::vector<double> x{ux(rng)};
        const auto [c1, c2] = split(u1, u2, t, c, x);
        ASSERT_GT(c1, 0.0);
        ASSERT_GT(c2, 0.0);
        ASSERT_EQ(c1 + c2, c);
        const double m1 = u1.u_c(t, c1, x), m2 = u2.u_c(t, c2, x);
        const double res = std::abs(m1 - m2) / (0.5 * (m1 + m2));
        strict += res < 1e-10;
        EXPECT_LT(res, 1e-10 + rounding_bound(u1, u2, t, c1, c2, x, c)) << "probe " << i << " c1/c=" << c1 / c;
    }
    // Only splits with a part below ~1e-7 of c are limited by rounding.
    EXPECT_GT(strict, 900);
}

TEST(Split, NondecreasingInTotal) {
    const auto u1 = UtilityFn::crra(0.7), u2 = scale(0.4, UtilityFn::crra(3.0));
    double prev = 0.0;
    for (double c = 0.01; c < 100.0; c *= 1.3) {
        const double c1 = split(u1, u2, 0.2, c, X0).first;
        EXPECT_GE(c1, prev);
        prev = c1;
    }
}

TEST(Split, CommonScaleCancelsExactly) {
    const auto u1 = UtilityFn::crra(0.7), u2 = time_state_crra(2.0, 0.2, 0.1);
    for (double k : {1e-3, 0.37, 12.0}) {
        for (double c : {0.1, 1.0, 9.0}) {
            const auto plain = split(u1, u2, 0.6, c, X0);
            const auto scaled = split(scale(k, u1), scale(k, u2), 0.6, c, X0);
            EXPECT_EQ(plain, scaled);
        }
    }
}

TEST(SupConvolution, LogPairValue) {
    const auto u = sup_convolve(UtilityFn::log(), UtilityFn::log());
    EXPECT_NEAR(u.u(0.0, 2.0, X0), 0.0, 1e-15);
    EXPECT_NEAR(u.u_c(0.0, 2.0, X0), 1.0, 1e-13);
}

TEST(SupConvolution, ValueEqualsSumAtSplitAndMarginalByDifferences) {
    const auto u1 = time_state_crra(0.6, 0.1, 0.3), u2 = scale(0.5, time_state_crra(2.2, -0.4, -0.2));
    const auto u = sup_convolve(u1, u2);
    const std::vector<double> x{0.4};
    for (double c : {0.2, 1.0, 4.0}) {
        const double t = 0.3;
        const auto [c1, c2] = split(u1, u2, t, c, x);
        EXPECT_LT(rel(u.u(t, c, x), u1.u(t, c1, x) + u2.u(t, c2, x)), 1e-12);
        EXPECT_LT(rel(u.u_c(t, c, x), u1.u_c(t, c1, x)), 1e-12);
        EXPECT_LT(rel(u.u_c(t, c, x), fd_uc(u, t, c, x, 1e-4 * c)), 1e-6);
    }
}

// (u_c/u_cc)(c) = (u1_c/u1_cc)(c1) + (u2_c/u2_cc)(c2)
TEST(SupConvolution, CurvatureAdditiveIdentity) {
    const auto u1 = time_state_crra(0.6, 0.1, 0.3), u2 = scale(2.0, time_state_crra(3.0, -0.4, -0.2));
    const auto u = sup_convolve(u1, u2);
    const std::vector<double> x{-0.3};
    for (double c : {0.05, 0.8, 3.0, 40.0}) {
        const double t = 0.7;
        const auto [c1, c2] = split(u1, u2, t, c, x);
        const double lhs = u.u_c(t, c, x) / fd_ucc(u, t, c, x, 1e-4 * c);
        const double rhs = -c1 / 0.6 - c2 / 3.0;
        EXPECT_LT(rel(lhs, rhs), 1e-6) << "c=" << c;
        EXPECT_LT(rel(u.u_c(t, c, x) / u.u_cc(t, c, x), rhs), 1e-12);
    }
}

// (u_cx/u_cc)(c) = (u1_cx/u1_cc)(c1) + (u2_cx/u2_cc)(c2)
TEST(SupConvolution, StateAdditiveIdentity) {
    const double b1 = 0.3, b2 = -0.5, a1 = 0.6, a2 = 3.0;
    const auto u1 = time_state_crra(a1, 0.1, b1), u2 = scale(2.0, time_state_crra(a2, -0.4, b2));
    const auto u = sup_convolve(u1, u2);
    const std::vector<double> x{0.25};
    for (double c : {0.05, 0.8, 3.0, 40.0}) {
        const double t = 0.2;
        const auto [c1, c2] = split(u1, u2, t, c, x);
        const double lhs = fd_ucx(u, t, c, x, 1e-4) / fd_ucc(u, t, c, x, 1e-4 * c);
        // For CRRA u_cx/u_cc = (g'/g) c / (-a) = -b c / a.
        const double rhs = -b1 * c1 / a1 - b2 * c2 / a2;
        EXPECT_LT(rel(lhs, rhs), 1e-6) << "c=" << c;
        EXPECT_LT(rel(u.u_cx(0, t, c, x) / u.u_cc(t, c, x), rhs), 1e-12);
    }
}

// (u_ct/u_cc)(c) = (u1_ct/u1_cc)(c1) + (u2_ct/u2_cc)(c2)
TEST(SupConvolution, TimeAdditiveIdentity) {
    const double n1 = 0.8, n2 = -0.6, a1 = 1.5, a2 = 0.4;
    const auto u1 = time_state_crra(a1, n1, 0.0), u2 = scale(0.3, time_state_crra(a2, n2, 0.2));
    const auto u = sup_convolve(u1, u2);
    const std::vector<double> x{1.0};
    for (double c : {0.05, 0.8, 3.0, 40.0}) {
        const double t = 0.5;
        const auto [c1, c2] = split(u1, u2, t, c, x);
        const double lhs = fd_uct(u, t, c, x, 1e-4) / fd_ucc(u, t, c, x, 1e-4 * c);
        const double rhs = -n1 * c1 / a1 - n2 * c2 / a2;
        EXPECT_LT(rel(lhs, rhs), 1e-6) << "c=" << c;
    }
}

TEST(SupConvolution, RiskToleranceMixes) {
    const double a1 = 0.5, a2 = 4.0;
    const auto u1 = UtilityFn::crra(a1), u2 = scale(3.0, UtilityFn::crra(a2));
    const auto u = sup_convolve(u1, u2);
    for (double c : {0.01, 1.0, 100.0}) {
        const auto [c1, c2] = split(u1, u2, 0.0, c, X0);
        const double a_fd = -c * fd_ucc(u, 0.0, c, X0, 1e-4 * c) / u.u_c(0.0, c, X0);
        EXPECT_LT(rel(1.0 / a_fd, (c1 / c) / a1 + (c2 / c) / a2), 1e-6);
    }
}

TEST(SupConvolution, EqualRiskAversionStaysCrra) {
    const auto u = sup_convolve(scale(0.2, UtilityFn::crra(2.0)), scale(0.8, UtilityFn::crra(2.0)));
    for (double c : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
        const double a_fd = -c * fd_ucc(u, 0.0, c, X0, 1e-4 * c) / u.u_c(0.0, c, X0);
        EXPECT_NEAR(a_fd, 2.0, 2e-6);
        EXPECT_NEAR(u.risk_aversion(0.0, c, X0), 2.0, 1e-10);
    }
}

TEST(SupConvolution, NestingIsAssociative) {
    const auto u1 = UtilityFn::log(), u2 = scale(0.5, UtilityFn::crra(2.0)), u3 = scale(0.2, UtilityFn::crra(0.5));
    const auto left = sup_convolve(sup_convolve(u1, u2), u3);
    const auto right = sup_convolve(u1, sup_convolve(u2, u3));
    for (double c : {0.1, 1.0, 10.0}) {
        EXPECT_LT(rel(left.u(0.5, c, X0), right.u(0.5, c, X0)), 1e-11);
        EXPECT_LT(rel(left.u_c(0.5, c, X0), right.u_c(0.5, c, X0)), 1e-11);
        EXPECT_LT(rel(left.tolerance(0.5, c, X0), right.tolerance(0.5, c, X0)), 1e-10);
    }
}

TEST(Aggregate, SingleComponentUnchanged) {
    const auto u = time_state_crra(2.0, 0.3, 0.1);
    const auto agg = aggregate({u}, WeightVector({1.0}));
    const std::vector<double> x{0.5};
    for (double c : {0.1, 2.0}) {
        EXPECT_EQ(agg.utility().u(0.3, c, x), u.u(0.3, c, x));
        EXPECT_EQ(agg.utility().u_c(0.3, c, x), u.u_c(0.3, c, x));
        EXPECT_EQ(agg.allocate(0.3, c, x), std::vector<double>{c});
    }
}

TEST(Aggregate, HalfHalfLogs) {
    const auto agg = aggregate({UtilityFn::log(), UtilityFn::log()}, WeightVector({0.5, 0.5}));
    EXPECT_NEAR(agg.utility().u(0.0, 2.0, X0), 0.0, 1e-15);
    const auto alloc = agg.allocate(0.0, 2.0, X0);
    EXPECT_DOUBLE_EQ(alloc[0], 1.0);
    EXPECT_DOUBLE_EQ(alloc[1], 1.0);
}

TEST(Aggregate, ThreeEqualCrraKeepRiskAversion) {
    const auto agg = aggregate({UtilityFn::crra(3.0), UtilityFn::crra(3.0), UtilityFn::crra(3.0)},
                               WeightVector({0.2, 0.3, 0.5}));
    for (double c : {0.01, 1.0, 50.0}) {
        EXPECT_NEAR(agg.utility().risk_aversion(0.5, c, X0), 3.0, 1e-10);
        const auto alloc = agg.allocate(0.5, c, X0);
        double denom = 0.0;
        for (double w : {0.2, 0.3, 0.5}) denom += std::cbrt(w);
        EXPECT_LT(rel(alloc[1], c * std::cbrt(0.3) / denom), 1e-10);
    }
}

TEST(Aggregate, ZeroWeightAgentExcluded) {
    const auto agg =
        aggregate({UtilityFn::log(), UtilityFn::crra(2.0), UtilityFn::log()}, WeightVector({0.4, 0.0, 0.6}));
    EXPECT_EQ(agg.active().size(), 2u);
    const auto alloc = agg.allocate(0.1, 5.0, X0);
    EXPECT_EQ(alloc[1], 0.0);
    EXPECT_LT(rel(alloc[0], 2.0), 1e-12);
    EXPECT_EQ((alloc[0] + alloc[1]) + alloc[2], 5.0);
}

TEST(Aggregate, AllocationSumsExactlyAndMeetsFoc) {
    const std::vector<UtilityFn> us{UtilityFn::log(), UtilityFn::crra(2.0, Expr::constant(0.0), Expr::constant(1.5)),
                                    UtilityFn::crra(0.5)};
    const WeightVector w({0.2, 0.07, 0.73});
    const auto agg = aggregate(us, w);
    for (double c : {1e-3, 0.4, 1.0, 30.0, 1e4}) {
        const auto alloc = agg.allocate(0.0, c, X0);
        EXPECT_EQ((alloc[0] + alloc[1]) + alloc[2], c);
        const double m0 = w[0] * us[0].u_c(0.0, alloc[0], X0);
        double worst = 0.0;
        for (std::size_t m = 1; m < 3; ++m) {
            const double bound = 1e-10 + rounding_bound(us[0], us[m], 0.0, alloc[0], alloc[m], X0, c);
            worst = std::max(worst, bound);
            EXPECT_LT(rel(w[m] * us[m].u_c(0.0, alloc[m], X0), m0), bound) << "c=" << c << " m=" << m;
        }
        EXPECT_LT(rel(agg.utility().u_c(0.0, c, X0), m0), 2 * worst);
    }
}

TEST(Aggregate, ConcaveIncreasing) {
    const auto agg = aggregate({UtilityFn::log(), UtilityFn::crra(2.0)}, WeightVector({0.6, 0.4}));
    double prev_u = -1e300, prev_uc = 1e300;
    for (double c = 0.05; c < 50.0; c *= 1.5) {
        const double u = agg.utility().u(0.0, c, X0), uc = agg.utility().u_c(0.0, c, X0);
        EXPECT_GT(u, prev_u);
        EXPECT_LT(uc, prev_uc);
        prev_u = u;
        prev_uc = uc;
    }
}

TEST(Aggregate, RejectsMismatchedOrZeroWeights) {
    EXPECT_THROW(WeightVector({0.0, 0.0}), ConfigError);
    EXPECT_THROW(aggregate({UtilityFn::log()}, WeightVector({0.5, 0.5})), ConfigError);
}

TEST(Cone, LogAndCrraRiskAversion) {
    const auto probes = default_probes({{0.0}, {1.0}});
    const auto log_d = cone_diagnostics(UtilityFn::log(), probes, 10.0);
    EXPECT_NEAR(log_d.min_risk_aversion, 1.0, 1e-12);
    EXPECT_NEAR(log_d.max_risk_aversion, 1.0, 1e-12);
    EXPECT_TRUE(log_d.monotone_concave);
    EXPECT_TRUE(log_d.inada);
    const auto c3 = cone_diagnostics(UtilityFn::crra(3.0), probes, 10.0);
    EXPECT_NEAR(c3.min_risk_aversion, 3.0, 1e-12);
    EXPECT_NEAR(c3.max_risk_aversion, 3.0, 1e-12);
    EXPECT_TRUE(c3.within_bound);
    const auto tight = cone_diagnostics(UtilityFn::crra(3.0), probes, 2.0);
    EXPECT_FALSE(tight.within_bound);
}

TEST(Cone, StateSensitivityOfCrra) {
    const auto u = UtilityFn::crra(2.0, Expr::constant(0.0), Expr::exp_affine(0.0, 0.7, 0));
    const auto d = cone_diagnostics(u, default_probes({{0.0}, {0.5}}), 100.0);
    EXPECT_NEAR(d.max_state_sensitivity, 0.7, 1e-10);
    EXPECT_NEAR(d.max_cone_statistic, 2.7, 1e-10);
}
