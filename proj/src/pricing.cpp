#include "radner/pricing.hpp"

#include "radner/error.hpp"
#include "radner/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace radner {

// ------------------------------------------------------------------ kernels

PricingKernelSet::PricingKernelSet(std::shared_ptr<const EconomySpec> econ, const WeightVector& w)
    : econ_(std::move(econ)), w_(w) {
    if (!econ_) throw ConfigError("no economy");
    econ_->check();
    rate_ = AggregateUtility(econ_->rate_utilities(), w_, econ_->splitter);
    term_ = AggregateUtility(econ_->terminal_utilities(), w_, econ_->splitter);
}

double PricingKernelSet::rate_marginal(double t, State x) const {
    std::vector<double> alloc(econ_->M());
    const double lam = std::exp(econ_->h(t, x));
    rate_.allocate_into(t, lam, x, alloc);
    return std::exp(rate_.log_marginal_from_allocation(t, alloc, x));
}

double PricingKernelSet::terminal_marginal(State x) const {
    std::vector<double> alloc(econ_->M());
    const double Lam = std::exp(econ_->H(1.0, x));
    term_.allocate_into(1.0, Lam, x, alloc);
    return std::exp(term_.log_marginal_from_allocation(1.0, alloc, x));
}

double PricingKernelSet::K(State x) const { return econ_->G(1.0, x) * terminal_marginal(x); }

double PricingKernelSet::beta(double t, State x) const { return econ_->q(t, x) - econ_->r(t, x); }

double PricingKernelSet::alpha(std::size_t j, double t, State x) const {
    return econ_->stocks[j].p(t, x) - econ_->q(t, x);
}

double PricingKernelSet::g(std::size_t j, double t, State x) const {
    const double f = econ_->stocks[j].f(t, x);
    if (f == 0.0) return 0.0;
    return f * rate_marginal(t, x);
}

namespace {

// Income minus allocation, with differences at rounding level flushed to
// zero: a net trade that only carries ulp noise would otherwise feed pure
// noise into the hedge PDE.
double net_of(double income, double alloc) {
    const double d = income - alloc;
    return std::abs(d) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(income, alloc) ? 0.0 : d;
}

} // namespace

double PricingKernelSet::rate_net_trade(std::size_t m, double t, State x) const {
    const std::size_t M = econ_->M();
    std::vector<double> alloc(M), shares(M), income(M);
    const double lam = std::exp(econ_->h(t, x));
    rate_.allocate_into(t, lam, x, alloc);
    for (std::size_t k = 0; k < M; ++k) shares[k] = econ_->agents[k].rate_share(t, x);
    split_by_shares(lam, shares, income);
    return std::exp(rate_.log_marginal_from_allocation(t, alloc, x)) * net_of(income[m], alloc[m]);
}

double PricingKernelSet::terminal_net_trade(std::size_t m, State x) const {
    const std::size_t M = econ_->M();
    std::vector<double> alloc(M), shares(M), income(M);
    const double Lam = std::exp(econ_->H(1.0, x));
    term_.allocate_into(1.0, Lam, x, alloc);
    for (std::size_t k = 0; k < M; ++k) shares[k] = econ_->agents[k].terminal_share(1.0, x);
    split_by_shares(Lam, shares, income);
    return std::exp(term_.log_marginal_from_allocation(1.0, alloc, x)) * net_of(income[m], alloc[m]);
}

PricingKernelSet build_kernels(std::shared_ptr<const EconomySpec> econ, const WeightVector& w,
                               const SpatialGrid& grid) {
    PricingKernelSet ks(std::move(econ), w);
    std::vector<double> x(grid.dimension());
    for (std::size_t node = 0; node < grid.node_count(); ++node) {
        grid.node_state(node, x);
        const double k = ks.K(x);
        if (!(k > 0.0) || !std::isfinite(k))
            throw EvaluationError(fmt::format("terminal kernel K = {} at x=[{}]", k, fmt::join(x, ", ")));
    }
    return ks;
}

// ------------------------------------------------------------------ surfaces

GridFunction solve_Y(const PricingKernelSet& ks, const TimeGrid& times, const SpatialGrid& space,
                     const PdeOptions& options) {
    const EconomySpec& e = ks.economy();
    BackwardSolver solver(
        e.diffusion, times, space, [&ks](double t, State x) { return ks.beta(t, x); }, {}, options);
    GridFunction v = solver.solve([&ks](State x) { return ks.K(x); });
    if (!(v.min() > 0.0) || !v.all_finite())
        throw SolverError(fmt::format("density surface lost positivity (min {}); refine the grid", v.min()));
    return v;
}

StockSurface solve_stock(const PricingKernelSet& ks, std::size_t j, const GridFunction& v,
                         const PdeOptions& options) {
    const EconomySpec& e = ks.economy();
    if (j >= e.J()) throw ConfigError(fmt::format("stock index {} out of range", j));
    if (!(v.min() > 0.0)) throw SolverError("density surface is not strictly positive");
    const bool has_source = !(e.stocks[j].f.kind() == Expr::Kind::constant && e.stocks[j].f.a() == 0.0);
    ScalarField source;
    if (has_source) source = [&ks, j](double t, State x) { return ks.g(j, t, x); };
    BackwardSolver solver(
        e.diffusion, v.times(), v.space(),
        [&ks, j](double t, State x) { return ks.alpha(j, t, x) + ks.beta(t, x); }, source, options);
    StockSurface out;
    out.m = solver.solve([&ks, &e, j](State x) { return ks.K(x) * e.stocks[j].F(1.0, x); });
    out.s = GridFunction(v.times(), v.space());
    for (std::size_t i = 0; i < out.s.values().size(); ++i) out.s.values()[i] = out.m.values()[i] / v.values()[i];
    return out;
}

NumeraireSurface numeraire_surface(const PricingKernelSet& ks, const GridFunction& v) {
    const EconomySpec& e = ks.economy();
    const TimeGrid& tg = v.times();
    const SpatialGrid& sg = v.space();
    NumeraireSurface out{GridFunction(tg, sg), GridFunction(tg, sg)};
    const std::size_t last = tg.size() - 1;
    parallel_for(
        sg.node_count(),
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> x(sg.dimension());
            for (std::size_t node = begin; node < end; ++node) {
                sg.node_state(node, x);
                for (std::size_t k = 0; k < tg.size(); ++k) {
                    const double uc = ks.rate_marginal(tg[k], x);
                    if (!(uc > 0.0) || !std::isfinite(uc))
                        throw EvaluationError(fmt::format("u_c = {} at t={} x=[{}]", uc, tg[k], fmt::join(x, ", ")));
                    out.b_left.at(k, node) = v.at(k, node) / uc;
                    out.b.at(k, node) = k == last ? e.G(1.0, x) : out.b_left.at(k, node);
                }
            }
        },
        0);
    return out;
}

double NumeraireSurface::at(double t, State x) const {
    if (t >= 1.0) return b.on_slice(b.times().size() - 1, x);
    return b_left(t, x);
}

double EquilibriumSolution::Y0() const { return v.on_slice(0, econ->diffusion.x0); }

EquilibriumSolution price_equilibrium(std::shared_ptr<const EconomySpec> econ, const WeightVector& w,
                                      const TimeGrid& times, const SpatialGrid& space, const PdeOptions& options) {
    EquilibriumSolution sol;
    sol.econ = econ;
    sol.w = w;
    sol.options = options;
    sol.kernels = build_kernels(econ, w, space);
    sol.v = solve_Y(sol.kernels, times, space, options);
    sol.min_v = sol.v.min();
    for (std::size_t j = 0; j < econ->J(); ++j) {
        sol.stocks.push_back(solve_stock(sol.kernels, j, sol.v, options));
        std::vector<GridFunction> grads;
        for (std::size_t i = 0; i < space.dimension(); ++i) grads.push_back(sol.stocks.back().s.gradient(i));
        sol.grad_s.push_back(std::move(grads));
    }
    sol.numeraire = numeraire_surface(sol.kernels, sol.v);
    sol.min_b = std::min(sol.numeraire.b.min(), sol.numeraire.b_left.min());
    if (!(sol.min_b > 0.0)) throw SolverError(fmt::format("numeraire surface is not positive (min {})", sol.min_b));
    return sol;
}

// --------------------------------------------------------------- pathwise

PathArray density_paths(const EquilibriumSolution& sol, const PrimitivePaths& prim) {
    const PathBundle& bundle = *prim.bundle;
    PathArray Y(prim.n_paths(), prim.n_times());
    parallel_for(prim.n_paths(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p)
            for (std::size_t k = 0; k < prim.n_times(); ++k)
                Y(p, k) = std::exp(prim.int_q(p, k) - prim.int_r(p, k)) *
                          sol.v(prim.times()[k], bundle.state(p, k));
    });
    return Y;
}

PathArray numeraire_paths(const EquilibriumSolution& sol, const PrimitivePaths& prim) {
    const PathBundle& bundle = *prim.bundle;
    const std::size_t last = prim.n_times() - 1;
    PathArray B(prim.n_paths(), prim.n_times());
    parallel_for(prim.n_paths(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            for (std::size_t k = 0; k < last; ++k)
                B(p, k) = std::exp(prim.int_q(p, k)) * sol.numeraire.at(prim.times()[k], bundle.state(p, k));
            B(p, last) = prim.psi[p];
        }
    });
    return B;
}

PathArray price_paths(const EquilibriumSolution& sol, std::size_t j, const PrimitivePaths& prim,
                      const GridFunction* s_override) {
    const PathBundle& bundle = *prim.bundle;
    const GridFunction& s = s_override ? *s_override : sol.stocks.at(j).s;
    const TimeGrid& tg = prim.times();
    const std::size_t nt = prim.n_times();
    PathArray S(prim.n_paths(), nt);
    parallel_for(prim.n_paths(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            double accrued = 0.0;
            double prev = 0.0;
            for (std::size_t k = 0; k < nt; ++k) {
                const State x = bundle.state(p, k);
                const double growth = std::exp(prim.int_p[j](p, k) - prim.int_q(p, k));
                const double g = sol.kernels.g(j, tg[k], x);
                const double cur = g == 0.0 ? 0.0 : g * growth / sol.v(tg[k], x);
                if (k > 0) accrued += 0.5 * tg.dt(k - 1) * (prev + cur);
                prev = cur;
                S(p, k) = accrued + growth * s(tg[k], x);
            }
        }
    });
    return S;
}

// ------------------------------------------------------------------ hedges

double solve_dispersion(std::span<const double> D, std::size_t J, std::size_t d, std::span<const double> rhs,
                        std::span<double> eta) {
    Eigen::MatrixXd At(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(J));
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < d; ++i)
            At(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = D[j * d + i];
    Eigen::VectorXd b(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) b(static_cast<Eigen::Index>(i)) = rhs[i];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(At, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sol = svd.solve(b);
    for (std::size_t j = 0; j < J; ++j) eta[j] = sol(static_cast<Eigen::Index>(j));
    const auto& sv = svd.singularValues();
    return sv.size() < static_cast<Eigen::Index>(d) ? 0.0 : sv(static_cast<Eigen::Index>(d) - 1);
}

HedgeRatios hedge_ratios(const EquilibriumSolution& sol, std::size_t m, const PrimitivePaths& prim,
                         double rank_threshold) {
    const EconomySpec& e = *sol.econ;
    if (m >= e.M()) throw ConfigError(fmt::format("agent index {} out of range", m));
    const std::size_t d = e.d();
    const std::size_t J = e.J();
    const PricingKernelSet& ks = sol.kernels;

    BackwardSolver solver(
        e.diffusion, sol.v.times(), sol.v.space(), [&e](double t, State x) { return -e.r(t, x); },
        [&ks, m](double t, State x) { return ks.rate_net_trade(m, t, x); }, sol.options);
    const GridFunction n = solver.solve([&ks, m](State x) { return ks.terminal_net_trade(m, x); });

    HedgeRatios out;
    out.value = GridFunction(n.times(), n.space());
    for (std::size_t i = 0; i < n.values().size(); ++i) out.value.values()[i] = n.values()[i] / sol.v.values()[i];
    std::vector<GridFunction> grad_v;
    for (std::size_t i = 0; i < d; ++i) grad_v.push_back(out.value.gradient(i));

    const PathBundle& bundle = *prim.bundle;
    const TimeGrid& tg = prim.times();
    out.H.assign(J, PathArray(prim.n_paths(), prim.n_times()));
    std::vector<double> path_max(prim.n_paths(), 0.0);
    parallel_for(prim.n_paths(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> sig(d * d), D(J * d), rhs(d), eta(J), gs(J * d), gv(d);
        for (std::size_t p = begin; p < end; ++p) {
            for (std::size_t k = 0; k < prim.n_times(); ++k) {
                const double t = tg[k];
                const State x = bundle.state(p, k);
                e.diffusion.volatility_into(t, x, sig);
                for (std::size_t l = 0; l < d; ++l) {
                    gv[l] = grad_v[l](t, x);
                    for (std::size_t j = 0; j < J; ++j) gs[j * d + l] = sol.grad_s[j][l](t, x);
                }
                for (std::size_t i = 0; i < d; ++i) {
                    double r = 0.0;
                    for (std::size_t l = 0; l < d; ++l) r += sig[l * d + i] * gv[l];
                    rhs[i] = r;
                    for (std::size_t j = 0; j < J; ++j) {
                        double acc = 0.0;
                        for (std::size_t l = 0; l < d; ++l) acc += gs[j * d + l] * sig[l * d + i];
                        D[j * d + i] = acc;
                    }
                }
                const double smin = solve_dispersion(D, J, d, rhs, eta);
                if (!(smin > rank_threshold))
                    throw CompletenessError(fmt::format(
                        "dispersion matrix is rank deficient (sigma_min {} <= {}) on path {} at t={} x=[{}]", smin,
                        rank_threshold, p, t, fmt::join(x.begin(), x.end(), ", ")));
                for (std::size_t j = 0; j < J; ++j) {
                    const double h = eta[j] * std::exp(-prim.int_p[j](p, k));
                    out.H[j](p, k) = h;
                    path_max[p] = std::max(path_max[p], std::abs(h));
                }
            }
        }
    });
    out.max_abs = *std::max_element(path_max.begin(), path_max.end());
    return out;
}

} // namespace radner
