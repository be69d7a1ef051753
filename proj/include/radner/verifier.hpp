#pragma once

#include "radner/economy.hpp"
#include "radner/pricing.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace radner {

struct CheckResult {
    std::string name;
    double statistic = 0.0;
    double tolerance = 0.0;
    double standard_error = -1.0;  // < 0 for deterministic checks
    bool pass = false;
    bool skipped = false;
    std::string detail;
    std::map<std::string, double> extra;
};

// Pareto allocations along every path: pi[m](p, k) for the rate, Pi[m][p]
// at maturity, and the income split lambda^m / Lambda^m from the primitives.
struct AllocationPaths {
    std::vector<PathArray> pi;
    std::vector<std::vector<double>> Pi;
};

AllocationPaths allocate_paths(const EconomySpec& econ, const WeightVector& w, const PrimitivePaths& prim,
                               std::size_t threads = 0);

// max over paths and times of |sum_m pi^m - lambda| / lambda and the same at
// maturity; tolerance = splitter tolerance * M.
CheckResult check_clearing(const EconomySpec& econ, const PrimitivePaths& prim, const AllocationPaths& alloc);

struct PricePaths {
    PathArray Y;        // density Y_t
    PathArray B;        // numeraire, last column B_1 = Psi
    PathArray B_left;   // numeraire with the left limit in the last column
    double Y0 = 0.0;
    SpatialGrid grid;   // surface box; paths leaving it are excluded pathwise
};

PricePaths price_path_set(const EquilibriumSolution& sol, const PrimitivePaths& prim);

// Q-expectation of the discounted net trade of agent m; passes within
// 3 SE plus a 1e-9 relative floor on the gross income value.
CheckResult check_budget(const PrimitivePaths& prim, const AllocationPaths& alloc, const PricePaths& pp,
                         std::size_t m);

// w^m u^m_c(pi^m) against u_c(lambda; w), pathwise relative residual < 1e-8
// on the first max_paths paths.
CheckResult check_optimality(const EconomySpec& econ, const WeightVector& w, const PrimitivePaths& prim,
                             const AllocationPaths& alloc, std::size_t m, std::size_t threads = 0,
                             std::size_t max_paths = 2000);

struct AdRadnerConfig {
    double interpolation_tolerance = 2e-3;  // pathwise |P B / Y - 1|
    double normalization_floor = 1e-3;      // added to 3 SE for E[y P_1 Psi] - 1
};

// P_t = e^{-int r} u_c(lambda; w) against Z_t / B_t with Z = Y / Y0, and
// the normalization E[P_1 Psi] / Y0 = 1.
CheckResult check_ad_radner(const EconomySpec& econ, const WeightVector& w, const PrimitivePaths& prim,
                            const PricePaths& pp, const AdRadnerConfig& cfg = {}, std::size_t threads = 0);

struct MartingaleConfig {
    double t1 = 0.25;
    double t2 = 1.0;
    std::size_t bins = 5;
    std::size_t paths = 50000;
    std::uint64_t seed = 7;
    double pass_fraction = 0.9;
    std::size_t threads = 0;
};

// Conditional-mean test of (S_t2 - S_t1) Y_t2 / Y_t1 in quantile bins of
// X_t1 (first axis) on freshly streamed paths. s_override replaces the
// stock surface (used by the negative control).
CheckResult check_martingale(const EquilibriumSolution& sol, std::size_t j, const MartingaleConfig& cfg,
                             const GridFunction* s_override = nullptr);

// sum_m H^m = 0 pathwise, relative to max |H|.
CheckResult check_hedge_clearing(const std::vector<HedgeRatios>& hedges, std::size_t J);

struct VerifyConfig {
    AdRadnerConfig ad;
    MartingaleConfig martingale;
    bool controls = true;
    bool hedges = true;            // hedge clearing; needs a passing dispersion report
    double rank_threshold = 0.0;   // from the dispersion report
    bool rank_ok = false;
    std::size_t threads = 0;
};

struct ControlResult {
    std::string check;
    std::string corruption;
    CheckResult result;
    bool detected = false;  // the corrupted input failed the check
};

struct VerificationSuiteResult {
    std::vector<CheckResult> checks;
    std::vector<ControlResult> controls;

    bool pass() const;               // every non-skipped check passes
    bool controls_detected() const;  // every control failed its check
};

VerificationSuiteResult verify(const EquilibriumSolution& sol, const PrimitivePaths& prim, const VerifyConfig& cfg);

nlohmann::json to_json(const CheckResult& c);
nlohmann::json to_json(const VerificationSuiteResult& suite);

} // namespace radner
