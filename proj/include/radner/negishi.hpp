#pragma once

#include "radner/economy.hpp"
#include "radner/error.hpp"
#include "radner/parallel.hpp"
#include "radner/utility.hpp"
#include "radner/weights.hpp"

#include <vector>

namespace radner {

// Pareto allocation of total among the agents for weights w.
std::vector<double> pareto_allocation(const WeightVector& w, double total, double t, State x,
                                      const std::vector<UtilityFn>& utilities, const SplitterConfig& cfg = {});

struct ExcessReport {
    WeightVector w;
    std::vector<double> phi;
    std::vector<double> standard_errors;
    std::size_t n_paths = 0;
    // Sum check: |sum_m phi^m| against the mean per-path gross accumulation
    // E[e^{-int r} U_c Lambda + int e^{-int r} u_c lambda dt].
    double phi_sum = 0.0;
    double accumulation = 0.0;

    double phi_inf() const;
    double max_standard_error() const;
};

ExcessReport excess_map(const WeightVector& w, const PrimitivePaths& prim, const EconomySpec& econ,
                        std::size_t threads = 0);

struct StatePricePath {
    PathArray P;             // P_t for t < 1; the last column holds P_1
    Estimate normalization;  // E[P_1 Psi]
};

StatePricePath state_price(const WeightVector& w, const PrimitivePaths& prim, const EconomySpec& econ,
                           std::size_t threads = 0);

struct SolverConfig {
    double abs_tol = 1e-10;
    int max_iterations = 50;
    double fd_step = 1e-6;
    double min_weight = 1e-10;
    int max_clipped = 3;        // consecutive clipped iterates before BoundaryError
    std::vector<double> initial;  // empty: uniform

    bool operator==(const SolverConfig&) const = default;
};

struct TraceRow {
    int iteration = 0;
    std::vector<double> w;
    double phi_inf = 0.0;
    double step = 0.0;
    double standard_error = 0.0;
    double phi_sum = 0.0;
    double accumulation = 0.0;
};

struct WeightSolution {
    WeightVector w;
    ExcessReport excess;
    std::vector<TraceRow> trace;
    int iterations = 0;
    double tolerance = 0.0;  // max(abs_tol, 3 SE) at the accepted iterate
    bool used_bisection = false;
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, WeightVector best, std::vector<TraceRow> trace)
        : Error(what), best(std::move(best)), trace(std::move(trace)) {}
    WeightVector best;
    std::vector<TraceRow> trace;
};

// Damped Newton on the first M-1 weights with a forward-difference
// Jacobian and backtracking on the sup norm of phi; bisection on phi^1 for
// M = 2 when Newton stalls. The primitives are fixed across iterations.
WeightSolution solve_weights(const EconomySpec& econ, const PrimitivePaths& prim, const SolverConfig& cfg = {},
                             std::size_t threads = 0);

} // namespace radner
