#include "radner/negishi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace radner {

std::vector<double> pareto_allocation(const WeightVector& w, double total, double t, State x,
                                      const std::vector<UtilityFn>& utilities, const SplitterConfig& cfg) {
    return AggregateUtility(utilities, w, cfg).allocate(t, total, x);
}

double ExcessReport::phi_inf() const {
    double m = 0.0;
    for (double v : phi) m = std::max(m, std::abs(v));
    return m;
}

double ExcessReport::max_standard_error() const {
    double m = 0.0;
    for (double v : standard_errors) m = std::max(m, v);
    return m;
}

namespace {

void require_marginal(double v, const char* what, std::size_t p, double t) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw EvaluationError(fmt::format("{} marginal utility = {} on path {} at t={}", what, v, p, t));
}

} // namespace

ExcessReport excess_map(const WeightVector& w, const PrimitivePaths& prim, const EconomySpec& econ,
                        std::size_t threads) {
    const std::size_t M = econ.M();
    if (w.size() != M) throw ConfigError(fmt::format("{} weights for {} agents", w.size(), M));
    const AggregateUtility rate(econ.rate_utilities(), w, econ.splitter);
    const AggregateUtility term(econ.terminal_utilities(), w, econ.splitter);
    const std::size_t np = prim.n_paths();
    const std::size_t nt = prim.n_times();
    const TimeGrid& tg = prim.times();
    const PathBundle& bundle = *prim.bundle;

    std::vector<std::vector<double>> eta(M, std::vector<double>(np));
    std::vector<double> gross(np);

    parallel_for(
        np,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> alloc(M), prev(M), cur(M);
            for (std::size_t p = begin; p < end; ++p) {
                double prev_gross = 0.0;
                std::fill(prev.begin(), prev.end(), 0.0);
                std::vector<double> acc(M, 0.0);
                double acc_gross = 0.0;
                // Rate part, trapezoid over the grid.
                for (std::size_t k = 0; k < nt; ++k) {
                    const double t = tg[k];
                    const State x = bundle.state(p, k);
                    const double lam = prim.lambda(p, k);
                    rate.allocate_into(t, lam, x, alloc);
                    const double uc = std::exp(rate.log_marginal_from_allocation(t, alloc, x));
                    require_marginal(uc, "aggregate", p, t);
                    const double disc = std::exp(-prim.int_r(p, k)) * uc;
                    for (std::size_t m = 0; m < M; ++m) cur[m] = disc * (alloc[m] - prim.lambda_m[m](p, k));
                    const double cur_gross = disc * lam;
                    if (k > 0) {
                        const double h = 0.5 * tg.dt(k - 1);
                        for (std::size_t m = 0; m < M; ++m) acc[m] += h * (prev[m] + cur[m]);
                        acc_gross += h * (prev_gross + cur_gross);
                    }
                    prev.swap(cur);
                    prev_gross = cur_gross;
                }
                // Terminal part.
                const State x1 = bundle.terminal_state(p);
                const double Lam = prim.Lambda[p];
                term.allocate_into(1.0, Lam, x1, alloc);
                const double Uc = std::exp(term.log_marginal_from_allocation(1.0, alloc, x1));
                require_marginal(Uc, "terminal aggregate", p, 1.0);
                const double disc = std::exp(-prim.int_r.terminal(p)) * Uc;
                for (std::size_t m = 0; m < M; ++m) eta[m][p] = acc[m] + disc * (alloc[m] - prim.Lambda_m[m][p]);
                gross[p] = acc_gross + disc * Lam;
            }
        },
        threads);

    ExcessReport rep;
    rep.w = w;
    rep.n_paths = np;
    for (std::size_t m = 0; m < M; ++m) {
        const Estimate e = mc_estimate(eta[m]);
        rep.phi.push_back(e.mean);
        rep.standard_errors.push_back(e.std_error);
    }
    double s = 0.0;
    for (double v : rep.phi) s += v;
    rep.phi_sum = s;
    rep.accumulation = mc_estimate(gross).mean;
    return rep;
}

StatePricePath state_price(const WeightVector& w, const PrimitivePaths& prim, const EconomySpec& econ,
                           std::size_t threads) {
    const std::size_t M = econ.M();
    if (w.size() != M) throw ConfigError(fmt::format("{} weights for {} agents", w.size(), M));
    const AggregateUtility rate(econ.rate_utilities(), w, econ.splitter);
    const AggregateUtility term(econ.terminal_utilities(), w, econ.splitter);
    const std::size_t np = prim.n_paths();
    const std::size_t nt = prim.n_times();
    const TimeGrid& tg = prim.times();
    const PathBundle& bundle = *prim.bundle;

    StatePricePath out;
    out.P = PathArray(np, nt);
    std::vector<double> weighted(np);
    parallel_for(
        np,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> alloc(M);
            for (std::size_t p = begin; p < end; ++p) {
                for (std::size_t k = 0; k + 1 < nt; ++k) {
                    const State x = bundle.state(p, k);
                    rate.allocate_into(tg[k], prim.lambda(p, k), x, alloc);
                    const double uc = std::exp(rate.log_marginal_from_allocation(tg[k], alloc, x));
                    require_marginal(uc, "aggregate", p, tg[k]);
                    out.P(p, k) = std::exp(-prim.int_r(p, k)) * uc;
                }
                const State x1 = bundle.terminal_state(p);
                term.allocate_into(1.0, prim.Lambda[p], x1, alloc);
                const double Uc = std::exp(term.log_marginal_from_allocation(1.0, alloc, x1));
                require_marginal(Uc, "terminal aggregate", p, 1.0);
                out.P(p, nt - 1) = std::exp(-prim.int_r.terminal(p)) * Uc;
                weighted[p] = out.P(p, nt - 1) * prim.psi[p];
            }
        },
        threads);
    out.normalization = mc_estimate(weighted);
    return out;
}

// ------------------------------------------------------------------ solver

namespace {

struct Projected {
    WeightVector w;
    bool clipped = false;
};

Projected project(const std::vector<double>& raw, double floor) {
    std::vector<double> w = raw;
    bool clipped = false;
    for (double& v : w) {
        if (!(v >= floor)) {
            v = floor;
            clipped = true;
        }
    }
    return {WeightVector::normalized(std::move(w)), clipped};
}

std::vector<double> free_to_full(const Eigen::VectorXd& z) {
    std::vector<double> w(static_cast<std::size_t>(z.size()) + 1);
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        w[static_cast<std::size_t>(i)] = z(i);
        s += z(i);
    }
    w.back() = 1.0 - s;
    return w;
}

Eigen::VectorXd full_to_free(const WeightVector& w) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(w.size() - 1));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = w[static_cast<std::size_t>(i)];
    return z;
}

Eigen::VectorXd residual(const ExcessReport& r) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(r.phi.size() - 1));
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = r.phi[static_cast<std::size_t>(i)];
    return f;
}

} // namespace

WeightSolution solve_weights(const EconomySpec& econ, const PrimitivePaths& prim, const SolverConfig& cfg,
                             std::size_t threads) {
    const std::size_t M = econ.M();
    if (M == 0) throw ConfigError("no agents");
    WeightSolution sol;
    if (cfg.max_iterations <= 0) throw ConfigError("solver max_iterations must be positive");

    auto record = [&](int it, const ExcessReport& r, double step) {
        TraceRow row;
        row.iteration = it;
        row.w.assign(r.w.values().begin(), r.w.values().end());
        row.phi_inf = r.phi_inf();
        row.step = step;
        row.standard_error = r.max_standard_error();
        row.phi_sum = r.phi_sum;
        row.accumulation = r.accumulation;
        sol.trace.push_back(row);
    };
    auto tolerance_of = [&](const ExcessReport& r) { return std::max(cfg.abs_tol, 3.0 * r.max_standard_error()); };
    auto accept = [&](const ExcessReport& r, int it) {
        sol.w = r.w;
        sol.excess = r;
        sol.iterations = it;
        sol.tolerance = tolerance_of(r);
        return sol;
    };

    if (M == 1) {
        ExcessReport r = excess_map(WeightVector({1.0}), prim, econ, threads);
        record(0, r, 0.0);
        return accept(r, 0);
    }

    WeightVector w = cfg.initial.empty() ? WeightVector::uniform(M) : WeightVector::normalized(cfg.initial);
    ExcessReport cur = excess_map(w, prim, econ, threads);
    record(0, cur, 0.0);
    if (cur.phi_inf() <= tolerance_of(cur)) return accept(cur, 0);

    ExcessReport best = cur;
    int clipped_run = 0;
    bool stalled = false;
    const Eigen::Index n = static_cast<Eigen::Index>(M - 1);

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        const Eigen::VectorXd z = full_to_free(cur.w);
        const Eigen::VectorXd f = residual(cur);
        Eigen::MatrixXd jac(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd zh = z;
            // Step away from the boundary so the probe stays on the simplex.
            const double h = z(i) + cfg.fd_step < 1.0 - cfg.min_weight ? cfg.fd_step : -cfg.fd_step;
            zh(i) += h;
            const auto probe = project(free_to_full(zh), cfg.min_weight);
            const ExcessReport rh = excess_map(probe.w, prim, econ, threads);
            jac.col(i) = (residual(rh) - f) / h;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            stalled = true;
            break;
        }
        const Eigen::VectorXd delta = -lu.solve(f);

        double alpha = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 30; ++bt, alpha *= 0.5) {
            const auto trial = project(free_to_full(z + alpha * delta), cfg.min_weight);
            ExcessReport r = excess_map(trial.w, prim, econ, threads);
            if (r.phi_inf() < cur.phi_inf() || r.phi_inf() <= tolerance_of(r)) {
                clipped_run = trial.clipped ? clipped_run + 1 : 0;
                cur = std::move(r);
                moved = true;
                break;
            }
        }
        if (!moved) {
            stalled = true;
            break;
        }
        record(it, cur, alpha * delta.lpNorm<Eigen::Infinity>());
        if (cur.phi_inf() < best.phi_inf()) best = cur;
        if (clipped_run >= cfg.max_clipped)
            throw BoundaryError(fmt::format("weights {} pinned to the simplex boundary for {} iterations",
                                            cur.w.to_string(), clipped_run));
        if (cur.phi_inf() <= tolerance_of(cur)) return accept(cur, it);
    }

    if (stalled && M == 2) {
        // Phi^1 is increasing in w^1; bisect on [floor, 1 - floor].
        double lo = cfg.min_weight, hi = 1.0 - cfg.min_weight;
        int it = static_cast<int>(sol.trace.size());
        for (int k = 0; k < 200 && it <= cfg.max_iterations + 200; ++k, ++it) {
            const double mid = 0.5 * (lo + hi);
            ExcessReport r = excess_map(WeightVector::normalized({mid, 1.0 - mid}), prim, econ, threads);
            record(it, r, hi - lo);
            if (r.phi_inf() < best.phi_inf()) best = r;
            if (r.phi_inf() <= tolerance_of(r)) {
                sol.used_bisection = true;
                return accept(r, it);
            }
            (r.phi[0] > 0.0 ? hi : lo) = mid;
            if (hi - lo < 1e-15) break;
        }
        if (best.w.min() <= cfg.min_weight * 1.0000001)
            throw BoundaryError(fmt::format("bisection collapsed onto the boundary at {}", best.w.to_string()));
    }
    throw NonConvergence(fmt::format("weight solver stopped with |phi|_inf = {} (tolerance {}) at {}",
                                     best.phi_inf(), tolerance_of(best), best.w.to_string()),
                         best.w, sol.trace);
}

} // namespace radner
