#include "radner/economy.hpp"

#include "radner/error.hpp"
#include "radner/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace radner {

std::vector<UtilityFn> EconomySpec::rate_utilities() const {
    std::vector<UtilityFn> out;
    for (const auto& a : agents) out.push_back(a.u);
    return out;
}

std::vector<UtilityFn> EconomySpec::terminal_utilities() const {
    std::vector<UtilityFn> out;
    for (const auto& a : agents) out.push_back(a.U);
    return out;
}

void EconomySpec::check() const {
    diffusion.check();
    const std::size_t dim = d();
    if (agents.empty()) throw ConfigError("economy needs at least one agent");
    if (stocks.empty()) throw ConfigError("economy needs at least one stock");
    auto fits = [&](const Expr& e, const std::string& what) {
        if (e.arity() > dim)
            throw ConfigError(fmt::format("{} references state axis {} but the dimension is {}", what,
                                          e.arity() - 1, dim));
    };
    fits(G, "G");
    fits(q, "q");
    fits(r, "r");
    fits(H, "H");
    fits(h1, "h1");
    fits(h2, "h2");
    if (h2.depends_on_time()) throw ConfigError("h2 must not depend on time");
    if (G.depends_on_time() || H.depends_on_time()) throw ConfigError("G and H must not depend on time");
    for (std::size_t j = 0; j < stocks.size(); ++j) {
        const auto& s = stocks[j];
        const std::string tag = s.name.empty() ? fmt::format("stock {}", j) : s.name;
        fits(s.F, tag + ".F");
        fits(s.f, tag + ".f");
        fits(s.p, tag + ".p");
        if (s.F.depends_on_time()) throw ConfigError(tag + ".F must not depend on time");
    }
    for (std::size_t m = 0; m < agents.size(); ++m) {
        const auto& a = agents[m];
        const std::string tag = a.name.empty() ? fmt::format("agent {}", m) : a.name;
        if (a.u.empty() || a.U.empty()) throw ConfigError(tag + " is missing a utility");
        fits(a.terminal_share, tag + ".terminal_share");
        fits(a.rate_share, tag + ".rate_share");
    }
}

void split_by_shares(double total, std::span<const double> shares, std::span<double> out) {
    const std::size_t M = shares.size();
    double prefix = 0.0;
    std::vector<double> cumulative(M);
    for (std::size_t m = 0; m < M; ++m) {
        prefix += shares[m];
        cumulative[m] = prefix;
    }
    double rest = total;
    for (std::size_t m = M; m-- > 1;) {
        const double frac = cumulative[m] > 0.0 ? std::min(1.0, shares[m] / cumulative[m]) : 0.0;
        double part = rest * frac;
        // Exact complement: the larger piece comes from a Sterbenz subtraction.
        if (part <= 0.5 * rest) {
            const double head = rest - part;
            part = rest - head;
            rest = head;
        } else {
            const double head = rest - part;
            rest = head;
        }
        out[m] = part;
    }
    out[0] = rest;
}

PrimitivePaths evaluate_primitives(const EconomySpec& spec, std::shared_ptr<const PathBundle> bundle,
                                   std::size_t threads) {
    spec.check();
    if (!bundle) throw ConfigError("no path bundle");
    if (bundle->dimension != spec.d()) throw ConfigError("path bundle dimension differs from the economy");
    const std::size_t M = spec.M();
    const std::size_t J = spec.J();
    const std::size_t np = bundle->n_paths;
    const std::size_t nt = bundle->n_times();
    const TimeGrid& tg = bundle->times;

    PrimitivePaths out;
    out.bundle = bundle;
    out.M = M;
    out.J = J;
    out.int_q = path_integral(*bundle, spec.q, threads);
    out.int_r = path_integral(*bundle, spec.r, threads);
    for (const auto& s : spec.stocks) out.int_p.push_back(path_integral(*bundle, s.p, threads));
    out.psi.resize(np);
    out.Lambda.resize(np);
    out.lambda = PathArray(np, nt);
    out.theta.assign(J, PathArray(np, nt));
    out.Theta.assign(J, std::vector<double>(np));
    out.lambda_m.assign(M, PathArray(np, nt));
    out.Lambda_m.assign(M, std::vector<double>(np));

    auto bad = [](const char* what, double v, std::size_t p, double t) {
        throw PrimitiveError(fmt::format("{} = {} is not positive on path {} at t={}", what, v, p, t));
    };

    parallel_for(
        np,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> shares(M), parts(M);
            for (std::size_t p = begin; p < end; ++p) {
                const State x1 = bundle->terminal_state(p);
                const double G = spec.G(1.0, x1);
                if (!(G > 0.0) || !std::isfinite(G)) bad("G", G, p, 1.0);
                out.psi[p] = G * std::exp(out.int_q.terminal(p));
                if (!(out.psi[p] > 0.0) || !std::isfinite(out.psi[p])) bad("Psi", out.psi[p], p, 1.0);

                for (std::size_t j = 0; j < J; ++j) {
                    const auto& s = spec.stocks[j];
                    for (std::size_t k = 0; k < nt; ++k)
                        out.theta[j](p, k) = s.f(tg[k], bundle->state(p, k)) * std::exp(out.int_p[j](p, k));
                    out.Theta[j][p] = G * s.F(1.0, x1) * std::exp(out.int_p[j].terminal(p));
                }

                for (std::size_t k = 0; k < nt; ++k) {
                    const State x = bundle->state(p, k);
                    const double lam = std::exp(spec.h(tg[k], x));
                    if (!(lam > 0.0) || !std::isfinite(lam)) bad("lambda", lam, p, tg[k]);
                    out.lambda(p, k) = lam;
                    for (std::size_t m = 0; m < M; ++m) {
                        shares[m] = spec.agents[m].rate_share(tg[k], x);
                        if (!(shares[m] >= 0.0))
                            throw PrimitiveError(fmt::format("rate share of agent {} is {} on path {} at t={}", m,
                                                             shares[m], p, tg[k]));
                    }
                    split_by_shares(lam, shares, parts);
                    for (std::size_t m = 0; m < M; ++m) out.lambda_m[m](p, k) = parts[m];
                }

                const double Lam = std::exp(spec.H(1.0, x1));
                if (!(Lam > 0.0) || !std::isfinite(Lam)) bad("Lambda", Lam, p, 1.0);
                out.Lambda[p] = Lam;
                for (std::size_t m = 0; m < M; ++m) {
                    shares[m] = spec.agents[m].terminal_share(1.0, x1);
                    if (!(shares[m] >= 0.0))
                        throw PrimitiveError(
                            fmt::format("terminal share of agent {} is {} on path {}", m, shares[m], p));
                }
                split_by_shares(Lam, shares, parts);
                for (std::size_t m = 0; m < M; ++m) out.Lambda_m[m][p] = parts[m];
            }
        },
        threads);

    // Every agent needs positive income with positive probability.
    for (std::size_t m = 0; m < M; ++m) {
        bool positive = false;
        for (std::size_t p = 0; p < np && !positive; ++p) {
            if (out.Lambda_m[m][p] > 0.0) positive = true;
            for (std::size_t k = 0; k < nt && !positive; ++k)
                if (out.lambda_m[m](p, k) > 0.0) positive = true;
        }
        if (!positive) throw PrimitiveError(fmt::format("agent {} has zero income on every simulated path", m));
    }
    return out;
}

AssumptionReport validate_assumptions(const EconomySpec& spec, const SpatialGrid& grid, const TimeGrid& tgrid,
                                      double rank_fraction_tolerance) {
    spec.check();
    const std::size_t d = spec.d();
    const std::size_t J = spec.J();
    const std::size_t M = spec.M();
    if (J < d) throw ConfigError(fmt::format("J = {} stocks cannot span d = {} sources of risk", J, d));
    if (grid.dimension() != d) throw ConfigError("spatial grid dimension differs from the economy");

    AssumptionReport rep;
    const std::size_t n = grid.node_count();
    rep.nodes = n;
    std::vector<double> x(d), xp(d), xm(d);
    std::vector<double> sv(n);
    std::vector<double> abs_derivs;
    abs_derivs.reserve(n * J * d);
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(d));

    rep.min_G = std::numeric_limits<double>::infinity();
    double gx_growth = 0.0, fx_growth = 0.0, H_growth = 0.0, h_growth = 0.0;
    for (std::size_t node = 0; node < n; ++node) {
        grid.node_state(node, x);
        double xnorm = 0.0;
        for (double v : x) xnorm += v * v;
        xnorm = std::sqrt(xnorm);
        for (std::size_t i = 0; i < d; ++i) {
            const double step = 1e-5 * std::max(1.0, std::abs(x[i]));
            xp = x;
            xm = x;
            xp[i] += step;
            xm[i] -= step;
            for (std::size_t j = 0; j < J; ++j) {
                const double dfdx = (spec.stocks[j].F(1.0, xp) - spec.stocks[j].F(1.0, xm)) / (2.0 * step);
                jac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = dfdx;
                abs_derivs.push_back(std::abs(dfdx));
                fx_growth = std::max(fx_growth, std::log1p(std::abs(dfdx)) / (1.0 + xnorm));
            }
            gx_growth = std::max(gx_growth, std::log1p(std::abs(spec.G.d_dx(i, 1.0, x))) / (1.0 + xnorm));
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
        sv[node] = svd.singularValues()(static_cast<Eigen::Index>(d - 1));
        const double G = spec.G(1.0, x);
        rep.min_G = std::min(rep.min_G, G);
        H_growth = std::max(H_growth, std::abs(spec.H(1.0, x)) / (1.0 + xnorm));
        for (std::size_t k = 0; k < tgrid.size(); ++k)
            h_growth = std::max(h_growth, std::abs(spec.h(tgrid[k], x)) / (1.0 + xnorm));
    }
    std::nth_element(abs_derivs.begin(), abs_derivs.begin() + static_cast<std::ptrdiff_t>(abs_derivs.size() / 2),
                     abs_derivs.end());
    rep.median_abs_derivative = abs_derivs[abs_derivs.size() / 2];
    rep.rank_threshold = 1e-8 * rep.median_abs_derivative;
    rep.min_singular_value = *std::min_element(sv.begin(), sv.end());
    std::size_t failures = 0;
    for (double s : sv)
        if (!(s > rep.rank_threshold) || s == 0.0) ++failures;
    rep.rank_failure_fraction = static_cast<double>(failures) / static_cast<double>(n);
    rep.rank_pass = rep.rank_failure_fraction < rank_fraction_tolerance;
    if (!rep.rank_pass)
        rep.notes.push_back(fmt::format("F-Jacobian rank below {} on {:.4g}% of nodes", d,
                                        100.0 * rep.rank_failure_fraction));
    rep.G_positive = rep.min_G > 0.0;
    if (!rep.G_positive) rep.notes.push_back(fmt::format("G reaches {} on the grid", rep.min_G));
    rep.growth = {{"G_x", gx_growth, "ln(1+|G_x|)/(1+|x|)"},
                  {"F_x", fx_growth, "ln(1+|F_x|)/(1+|x|)"},
                  {"H", H_growth, "|H|/(1+|x|)"},
                  {"h", h_growth, "|h|/(1+|x|)"}};

    // Rates and shares over time x space.
    rep.r_min = rep.q_min = std::numeric_limits<double>::infinity();
    rep.r_max = rep.q_max = -std::numeric_limits<double>::infinity();
    rep.min_share = std::numeric_limits<double>::infinity();
    bool finite = true;
    for (std::size_t k = 0; k < tgrid.size(); ++k) {
        const double t = tgrid[k];
        for (std::size_t node = 0; node < n; ++node) {
            grid.node_state(node, x);
            const double r = spec.r(t, x), q = spec.q(t, x);
            finite = finite && std::isfinite(r) && std::isfinite(q);
            rep.r_min = std::min(rep.r_min, r);
            rep.r_max = std::max(rep.r_max, r);
            rep.q_min = std::min(rep.q_min, q);
            rep.q_max = std::max(rep.q_max, q);
            for (const auto& s : spec.stocks) {
                const double p = s.p(t, x);
                finite = finite && std::isfinite(p);
                rep.p_abs_max = std::max(rep.p_abs_max, std::abs(p));
            }
            double rate_sum = 0.0, term_sum = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                const double a = spec.agents[m].rate_share(t, x);
                const double s = spec.agents[m].terminal_share(1.0, x);
                rep.min_share = std::min({rep.min_share, a, s});
                rate_sum += a;
                term_sum += s;
            }
            rep.max_share_sum_error =
                std::max({rep.max_share_sum_error, std::abs(rate_sum - 1.0), std::abs(term_sum - 1.0)});
        }
    }
    rep.rates_bounded = finite;
    if (!finite) rep.notes.push_back("r, q or p is not finite on the grid");
    rep.shares_valid = rep.min_share >= 0.0 && rep.max_share_sum_error <= 1e-12;
    if (!rep.shares_valid)
        rep.notes.push_back(fmt::format("income shares: min {} and max |sum - 1| {}", rep.min_share,
                                        rep.max_share_sum_error));
    return rep;
}

} // namespace radner
