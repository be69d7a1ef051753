#pragma once

#include "radner/economy.hpp"
#include "radner/grid_function.hpp"
#include "radner/pde.hpp"
#include "radner/utility.hpp"
#include "radner/weights.hpp"

#include <memory>
#include <vector>

namespace radner {

// Coefficient fields of the linear pricing problems for weights w:
//
//   K(x)      = G(x) U_c(e^{H(x)}, x; w)
//   beta      = q - r
//   alpha^j   = p^j - q
//   g^j(t, x) = f^j(t, x) u_c(t, e^{h(t, x)}, x; w)
class PricingKernelSet {
public:
    PricingKernelSet() = default;
    PricingKernelSet(std::shared_ptr<const EconomySpec> econ, const WeightVector& w);

    const EconomySpec& economy() const { return *econ_; }
    const WeightVector& weights() const { return w_; }
    const AggregateUtility& rate_aggregate() const { return rate_; }
    const AggregateUtility& terminal_aggregate() const { return term_; }

    double K(State x) const;
    double beta(double t, State x) const;
    double alpha(std::size_t j, double t, State x) const;
    double g(std::size_t j, double t, State x) const;

    // u_c(t, e^{h(t, x)}, x; w) and U_c(e^{H(x)}, x; w).
    double rate_marginal(double t, State x) const;
    double terminal_marginal(State x) const;

    // Agent m's net trade value densities for the hedge problem:
    // u_c (lambda^m - pi^m)(t, x) and U_c (Lambda^m - Pi^m)(x).
    double rate_net_trade(std::size_t m, double t, State x) const;
    double terminal_net_trade(std::size_t m, State x) const;

private:
    std::shared_ptr<const EconomySpec> econ_;
    WeightVector w_;
    AggregateUtility rate_;
    AggregateUtility term_;
};

// Checks K > 0 at every node of the grid (EvaluationError otherwise).
PricingKernelSet build_kernels(std::shared_ptr<const EconomySpec> econ, const WeightVector& w,
                               const SpatialGrid& grid);

// v(t, x) with v_t + L v + beta v = 0, v(1) = K, so Y_t = e^{int_0^t beta} v(t, X_t).
GridFunction solve_Y(const PricingKernelSet& kernels, const TimeGrid& times, const SpatialGrid& space,
                     const PdeOptions& options = {});

struct StockSurface {
    GridFunction m;  // m_t + L m + (alpha + beta) m + g = 0, m(1) = K F
    GridFunction s;  // m / v
};

// S^j_t = A^j_t + e^{int_0^t alpha^j} s^j(t, X_t) with the accrued term
// A^j_t = int_0^t g^j e^{int_0^u alpha^j} / v du.
StockSurface solve_stock(const PricingKernelSet& kernels, std::size_t j, const GridFunction& v,
                         const PdeOptions& options = {});

// b(t, x) = v / u_c(t, e^h, x; w) for t < 1 and G(x) at t = 1, so that
// B_t = e^{int_0^t q} b(t, X_t). b_left carries the left limit
// K / u_c(1, e^h, x; w) on its last slice and is used for every t < 1.
struct NumeraireSurface {
    GridFunction b;
    GridFunction b_left;

    double at(double t, State x) const;
};

NumeraireSurface numeraire_surface(const PricingKernelSet& kernels, const GridFunction& v);

struct EquilibriumSolution {
    std::shared_ptr<const EconomySpec> econ;
    WeightVector w;
    PricingKernelSet kernels;
    GridFunction v;
    std::vector<StockSurface> stocks;
    NumeraireSurface numeraire;
    std::vector<std::vector<GridFunction>> grad_s;  // [stock][axis]
    PdeOptions options;

    double Y0() const;  // v(0, X0)
    double min_v = 0.0;
    double min_b = 0.0;
};

// Solves v, every m^j / s^j, and b. Throws SolverError when v or b is not
// strictly positive.
EquilibriumSolution price_equilibrium(std::shared_ptr<const EconomySpec> econ, const WeightVector& w,
                                      const TimeGrid& times, const SpatialGrid& space,
                                      const PdeOptions& options = {});

// Pathwise reconstructions on the primitives' bundle.
PathArray density_paths(const EquilibriumSolution& sol, const PrimitivePaths& prim);   // Y_t
PathArray numeraire_paths(const EquilibriumSolution& sol, const PrimitivePaths& prim); // B_t, B_1 = Psi
PathArray price_paths(const EquilibriumSolution& sol, std::size_t j, const PrimitivePaths& prim,
                      const GridFunction* s_override = nullptr);                        // S^j_t

struct HedgeRatios {
    std::vector<PathArray> H;      // [stock] per path per time
    GridFunction value;            // n^m / v
    double max_abs = 0.0;
};

// Replicating stock holdings of agent m's net trade. rank_threshold: a node
// whose dispersion matrix has sigma_min <= threshold raises
// CompletenessError.
HedgeRatios hedge_ratios(const EquilibriumSolution& sol, std::size_t m, const PrimitivePaths& prim,
                         double rank_threshold);

// Solves D^T eta = rhs in the least-norm sense for the J x d matrix D.
// Returns sigma_min(D).
double solve_dispersion(std::span<const double> D, std::size_t J, std::size_t d, std::span<const double> rhs,
                        std::span<double> eta);

} // namespace radner
