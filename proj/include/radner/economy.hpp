#pragma once

#include "radner/diffusion.hpp"
#include "radner/expression.hpp"
#include "radner/utility.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace radner {

struct StockSpec {
    std::string name;
    Expr F;                            // terminal dividend factor F^j(x)
    Expr f = Expr::constant(0.0);      // dividend rate f^j(t, x)
    Expr p = Expr::constant(0.0);      // dividend growth rate p^j(t, x)

    bool operator==(const StockSpec&) const = default;
};

struct AgentSpec {
    std::string name;
    UtilityFn u;        // intermediate utility u^m(t, c, x)
    UtilityFn U;        // terminal utility U^m(c, x), evaluated at t = 1
    Expr terminal_share;  // s^m(x): fraction of the terminal endowment
    Expr rate_share;      // a^m(t, x): fraction of the income rate

    bool operator==(const AgentSpec&) const = default;
};

struct EconomySpec {
    DiffusionSpec diffusion;
    Expr G = Expr::constant(1.0);   // notional factor, Psi = G(X_1) e^{int q}
    Expr q = Expr::constant(0.0);
    Expr r = Expr::constant(0.0);   // impatience rate
    Expr H = Expr::constant(0.0);   // Lambda = e^{H(X_1)}
    Expr h1 = Expr::constant(0.0);  // lambda_t = e^{h1(t, X_t) + h2(X_t)}
    Expr h2 = Expr::constant(0.0);
    std::vector<StockSpec> stocks;
    std::vector<AgentSpec> agents;
    SplitterConfig splitter;

    std::size_t M() const { return agents.size(); }
    std::size_t J() const { return stocks.size(); }
    std::size_t d() const { return diffusion.dimension; }

    double h(double t, State x) const { return h1(t, x) + h2(t, x); }

    std::vector<UtilityFn> rate_utilities() const;
    std::vector<UtilityFn> terminal_utilities() const;

    // Shape checks only: dimensions, agent and stock counts, expression
    // arities. Throws ConfigError.
    void check() const;
};

// Splits total into parts proportional to shares so that the left-fold sum
// ((out[0] + out[1]) + ...) equals total exactly. Shares must be
// nonnegative; they are used as ratios.
void split_by_shares(double total, std::span<const double> shares, std::span<double> out);

struct PrimitivePaths {
    std::shared_ptr<const PathBundle> bundle;
    std::size_t M = 0;
    std::size_t J = 0;

    std::vector<double> psi;              // [path]
    PathArray int_q, int_r;               // cumulative integrals [path][time]
    std::vector<PathArray> int_p;         // [stock]
    std::vector<PathArray> theta;         // dividend rate theta^j_t [stock]
    std::vector<std::vector<double>> Theta;  // terminal dividend [stock][path]
    PathArray lambda;                     // total income rate e^{h}
    std::vector<double> Lambda;           // e^{H(X_1)} [path]
    std::vector<PathArray> lambda_m;      // [agent]
    std::vector<std::vector<double>> Lambda_m;  // [agent][path]

    std::size_t n_paths() const { return bundle->n_paths; }
    std::size_t n_times() const { return bundle->n_times(); }
    const TimeGrid& times() const { return bundle->times; }
};

PrimitivePaths evaluate_primitives(const EconomySpec& spec, std::shared_ptr<const PathBundle> bundle,
                                   std::size_t threads = 0);

struct GrowthDiagnostic {
    std::string field;
    double max_value = 0.0;   // sup over the grid of the reported quantity
    std::string quantity;
};

struct AssumptionReport {
    // F-Jacobian rank (finite differences over the spatial grid).
    double min_singular_value = 0.0;
    double median_abs_derivative = 0.0;
    double rank_threshold = 0.0;
    double rank_failure_fraction = 0.0;
    std::size_t nodes = 0;
    bool rank_pass = false;

    double min_G = 0.0;
    double r_min = 0.0, r_max = 0.0;
    double q_min = 0.0, q_max = 0.0;
    double p_abs_max = 0.0;
    double max_share_sum_error = 0.0;
    double min_share = 0.0;
    bool shares_valid = false;
    bool G_positive = false;
    bool rates_bounded = false;
    std::vector<GrowthDiagnostic> growth;
    std::vector<std::string> notes;

    bool ok() const { return rank_pass && shares_valid && G_positive && rates_bounded; }
};

// rank_fraction_tolerance: the rank test passes when the share of failing
// nodes is below it.
AssumptionReport validate_assumptions(const EconomySpec& spec, const SpatialGrid& grid, const TimeGrid& tgrid,
                                      double rank_fraction_tolerance = 1e-3);

} // namespace radner
