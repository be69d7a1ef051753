#include "radner/completeness.hpp"

#include "radner/error.hpp"
#include "radner/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace radner {

namespace {

double sigma_min_of(const double* D, std::size_t J, std::size_t d) {
    if (J == 1 && d == 1) return std::abs(D[0]);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < d; ++i) m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = D[j * d + i];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    return sv.size() < static_cast<Eigen::Index>(d) ? 0.0 : sv(static_cast<Eigen::Index>(d) - 1);
}

// sigma scale per axis: sqrt of the largest diagonal of sigma sigma^T at X0.
std::vector<double> sigma_scale(const DiffusionSpec& spec) {
    const std::size_t d = spec.dimension;
    std::vector<double> scale(d, 0.0), sig(d * d);
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        spec.volatility_into(t, spec.x0, sig);
        for (std::size_t i = 0; i < d; ++i) {
            double a = 0.0;
            for (std::size_t j = 0; j < d; ++j) a += sig[i * d + j] * sig[i * d + j];
            scale[i] = std::max(scale[i], std::sqrt(a));
        }
    }
    return scale;
}

} // namespace

DispersionReport dispersion(const EquilibriumSolution& sol, const DispersionConfig& cfg) {
    const EconomySpec& e = *sol.econ;
    const std::size_t J = e.J();
    const std::size_t d = e.d();
    if (J < d) throw ConfigError(fmt::format("J = {} stocks cannot span d = {} sources of risk", J, d));
    const TimeGrid& tg = sol.v.times();
    const SpatialGrid& sg = sol.v.space();
    const std::size_t n = sg.node_count();
    const std::size_t nt = tg.size();

    DispersionReport rep;
    rep.J = J;
    rep.d = d;
    rep.sigma_min = GridFunction(tg, sg);
    rep.matrices.assign(nt * n * J * d, 0.0);

    parallel_for(nt, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d), sig(d * d);
        for (std::size_t k = begin; k < end; ++k) {
            for (std::size_t node = 0; node < n; ++node) {
                sg.node_state(node, x);
                e.diffusion.volatility_into(tg[k], x, sig);
                double* D = rep.matrices.data() + (k * n + node) * J * d;
                for (std::size_t j = 0; j < J; ++j)
                    for (std::size_t i = 0; i < d; ++i) {
                        double acc = 0.0;
                        for (std::size_t l = 0; l < d; ++l) acc += sol.grad_s[j][l].at(k, node) * sig[l * d + i];
                        D[j * d + i] = acc;
                    }
                rep.sigma_min.at(k, node) = sigma_min_of(D, J, d);
            }
        }
    });

    double sq = 0.0;
    std::size_t count = 0;
    for (const auto& st : sol.stocks)
        for (double v : st.s.values()) {
            sq += v * v;
            ++count;
        }
    const double rms = std::sqrt(sq / static_cast<double>(std::max<std::size_t>(count, 1)));
    const auto scale = sigma_scale(e.diffusion);
    double ratio = 0.0;
    for (std::size_t i = 0; i < d; ++i) ratio = std::max(ratio, scale[i] / (sg.upper(i) - sg.lower(i)));
    rep.reference_scale = rms * ratio;
    rep.threshold = cfg.relative_threshold * rep.reference_scale;

    rep.min_sigma = rep.core_min_sigma = std::numeric_limits<double>::infinity();
    rep.max_sigma = rep.core_max_sigma = 0.0;
    std::vector<double> x(d);
    for (std::size_t k = 0; k + 1 < nt; ++k) {
        for (std::size_t node = 0; node < n; ++node) {
            if (sg.is_boundary(node)) continue;
            const double s = rep.sigma_min.at(k, node);
            ++rep.evaluated;
            rep.min_sigma = std::min(rep.min_sigma, s);
            rep.max_sigma = std::max(rep.max_sigma, s);
            sg.node_state(node, x);
            if (sg.in_core(x)) {
                rep.core_min_sigma = std::min(rep.core_min_sigma, s);
                rep.core_max_sigma = std::max(rep.core_max_sigma, s);
            }
            if (!(s > rep.threshold)) {
                ++rep.failures;
                if (rep.first_failures.size() < 20) rep.first_failures.push_back(k * n + node);
            }
        }
    }
    rep.failure_fraction = rep.evaluated ? static_cast<double>(rep.failures) / static_cast<double>(rep.evaluated) : 1.0;
    rep.pass = rep.evaluated > 0 && rep.failure_fraction < cfg.fraction_tolerance;
    return rep;
}

// ------------------------------------------------------------------ probe

namespace {

// Multilinear weights in (t, x) shared by every field on one grid.
struct Stencil {
    std::size_t k = 0;
    double wt = 0.0;
    std::size_t count = 0;
    std::size_t idx[4] = {0, 0, 0, 0};
    double w[4] = {0, 0, 0, 0};

    void build(const SpatialGrid& sg, std::size_t slice, double time_weight, State x) {
        k = slice;
        wt = time_weight;
        const std::size_t d = sg.dimension();
        std::size_t base = 0;
        double frac[2] = {0, 0};
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = std::clamp(x[i], sg.lower(i), sg.upper(i));
            const double s = (xi - sg.lower(i)) / sg.spacing(i);
            std::size_t j = static_cast<std::size_t>(std::floor(s));
            if (j >= sg.points(i) - 1) j = sg.points(i) - 2;
            frac[i] = s - static_cast<double>(j);
            base += j * sg.stride(i);
        }
        count = std::size_t{1} << d;
        for (std::size_t c = 0; c < count; ++c) {
            double wgt = 1.0;
            std::size_t id = base;
            for (std::size_t i = 0; i < d; ++i) {
                if (c & (std::size_t{1} << i)) {
                    wgt *= frac[i];
                    id += sg.stride(i);
                } else {
                    wgt *= 1.0 - frac[i];
                }
            }
            idx[c] = id;
            w[c] = wgt;
        }
    }

    double operator()(const GridFunction& f) const {
        const std::size_t n = f.slice_size();
        const double* lo = f.values().data() + k * n;
        double a = 0.0, b = 0.0;
        for (std::size_t c = 0; c < count; ++c) a += w[c] * lo[idx[c]];
        if (wt == 0.0) return a;
        const double* hi = lo + n;
        for (std::size_t c = 0; c < count; ++c) b += w[c] * hi[idx[c]];
        return (1.0 - wt) * a + wt * b;
    }
};

bool is_zero(const Expr& e) { return e.kind() == Expr::Kind::constant && e.a() == 0.0; }

} // namespace

ProbeReport martingale_uniqueness_probe(const EquilibriumSolution& sol, const DispersionReport& disp,
                                        const ProbeConfig& cfg) {
    if (!disp.pass)
        throw CompletenessError(fmt::format(
            "replication probe needs a full-rank dispersion report (failure fraction {})", disp.failure_fraction));
    if (cfg.paths == 0 || cfg.substeps == 0) throw ConfigError("probe needs positive paths and substeps");
    const EconomySpec& e = *sol.econ;
    const std::size_t d = e.d();
    const std::size_t J = e.J();
    const TimeGrid& tg = sol.v.times();
    const SpatialGrid& sg = sol.v.space();
    const PricingKernelSet& ks = sol.kernels;

    std::vector<Expr> claims = cfg.claims;
    std::mt19937_64 claim_rng(cfg.seed ^ 0x5bd1e995ULL);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    for (std::size_t c = 0; c < cfg.random_claims; ++c) {
        std::vector<std::vector<double>> poly(d);
        for (std::size_t i = 0; i < d; ++i) poly[i] = {coef(claim_rng), coef(claim_rng), 0.5 * coef(claim_rng)};
        claims.push_back(Expr::polynomial(poly));
    }
    if (claims.empty()) throw ConfigError("probe has no claims");
    const std::size_t nc = claims.size();

    // Claim surfaces c = w / v with w_t + L w + beta w = 0, w(1) = K phi.
    BackwardSolver solver(
        e.diffusion, tg, sg, [&ks](double t, State x) { return ks.beta(t, x); }, {}, sol.options);
    std::vector<GridFunction> value(nc);
    std::vector<std::vector<GridFunction>> grad(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        const Expr& phi = claims[c];
        GridFunction w = solver.solve([&ks, &phi](State x) { return ks.K(x) * phi(1.0, x); });
        for (std::size_t i = 0; i < w.values().size(); ++i) w.values()[i] /= sol.v.values()[i];
        for (std::size_t i = 0; i < d; ++i) grad[c].push_back(w.gradient(i));
        value[c] = std::move(w);
    }
    // Accrual integrands g^j / v.
    std::vector<GridFunction> accrual(J);
    std::vector<bool> has_accrual(J), has_alpha(J);
    for (std::size_t j = 0; j < J; ++j) {
        has_accrual[j] = !is_zero(e.stocks[j].f);
        has_alpha[j] = !(is_zero(e.stocks[j].p) && is_zero(e.q));
        if (!has_accrual[j]) continue;
        accrual[j] = GridFunction(tg, sg);
        std::vector<double> x(d);
        for (std::size_t k = 0; k < tg.size(); ++k)
            for (std::size_t node = 0; node < sg.node_count(); ++node) {
                sg.node_state(node, x);
                accrual[j].at(k, node) = ks.g(j, tg[k], x) / sol.v.at(k, node);
            }
    }

    const std::size_t steps = tg.intervals() * cfg.substeps;
    std::vector<std::vector<double>> err(nc, std::vector<double>(cfg.paths));
    std::vector<std::vector<double>> payoff(nc, std::vector<double>(cfg.paths));

    parallel_for(
        cfg.paths,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> x(d), scratch(2 * d + d * d), dw(d), sig(d * d);
            std::vector<double> S(J), S_new(J), int_a(J), acc(J), prev_rate(J), D(J * d), rhs(d), eta(J), H(J * nc), alpha_old(J);
            std::vector<double> wealth(nc);
            Stencil st;
            for (std::size_t p = begin; p < end; ++p) {
                auto rng = path_rng(cfg.seed, p);
                std::normal_distribution<double> normal(0.0, 1.0);
                x.assign(e.diffusion.x0.begin(), e.diffusion.x0.end());
                st.build(sg, 0, 0.0, x);
                for (std::size_t j = 0; j < J; ++j) {
                    int_a[j] = 0.0;
                    acc[j] = 0.0;
                    prev_rate[j] = has_accrual[j] ? st(accrual[j]) : 0.0;
                    S[j] = st(sol.stocks[j].s);
                }
                for (std::size_t c = 0; c < nc; ++c) wealth[c] = st(value[c]);
                double t = 0.0;
                for (std::size_t step = 0; step < steps; ++step) {
                    const std::size_t k = step / cfg.substeps;
                    const std::size_t sub = step % cfg.substeps;
                    const double dtk = tg.dt(k);
                    const double h = dtk / static_cast<double>(cfg.substeps);
                    // Holdings at the left end of the step.
                    e.diffusion.volatility_into(t, x, sig);
                    for (std::size_t j = 0; j < J; ++j)
                        for (std::size_t i = 0; i < d; ++i) {
                            double a = 0.0;
                            for (std::size_t l = 0; l < d; ++l) a += st(sol.grad_s[j][l]) * sig[l * d + i];
                            D[j * d + i] = a;
                        }
                    for (std::size_t c = 0; c < nc; ++c) {
                        for (std::size_t i = 0; i < d; ++i) {
                            double a = 0.0;
                            for (std::size_t l = 0; l < d; ++l) a += sig[l * d + i] * st(grad[c][l]);
                            rhs[i] = a;
                        }
                        double smin;
                        if (J == 1 && d == 1) {
                            smin = std::abs(D[0]);
                            eta[0] = rhs[0] / D[0];
                        } else {
                            smin = solve_dispersion(D, J, d, rhs, eta);
                        }
                        if (!(smin > disp.threshold))
                            throw CompletenessError(fmt::format(
                                "probe path {} reached a rank-deficient node at t={} (sigma_min {})", p, t, smin));
                        for (std::size_t j = 0; j < J; ++j) H[c * J + j] = eta[j] * std::exp(-int_a[j]);
                    }
                    // Advance the state.
                    const double sq = std::sqrt(h);
                    for (std::size_t i = 0; i < d; ++i) dw[i] = sq * normal(rng);
                    for (std::size_t j = 0; j < J; ++j)
                        alpha_old[j] = has_alpha[j] ? ks.alpha(j, t, x) : 0.0;
                    euler_step(e.diffusion, t, h, x, dw, scratch);
                    const double t_new = sub + 1 == cfg.substeps ? tg[k + 1] : tg[k] + static_cast<double>(sub + 1) * h;
                    if (sub + 1 == cfg.substeps)
                        st.build(sg, k + 1 < tg.intervals() ? k + 1 : k, k + 1 < tg.intervals() ? 0.0 : 1.0, x);
                    else
                        st.build(sg, k, (t_new - tg[k]) / dtk, x);
                    for (std::size_t j = 0; j < J; ++j) {
                        if (has_alpha[j]) int_a[j] += 0.5 * h * (alpha_old[j] + ks.alpha(j, t_new, x));
                        const double growth = std::exp(int_a[j]);
                        if (has_accrual[j]) {
                            const double rate = st(accrual[j]) * growth;
                            acc[j] += 0.5 * h * (prev_rate[j] + rate);
                            prev_rate[j] = rate;
                        }
                        S_new[j] = acc[j] + growth * st(sol.stocks[j].s);
                    }
                    for (std::size_t c = 0; c < nc; ++c)
                        for (std::size_t j = 0; j < J; ++j) wealth[c] += H[c * J + j] * (S_new[j] - S[j]);
                    S.swap(S_new);
                    t = t_new;
                }
                for (std::size_t c = 0; c < nc; ++c) {
                    const double phi = claims[c](1.0, x);
                    payoff[c][p] = phi;
                    err[c][p] = wealth[c] - phi;
                }
            }
        },
        cfg.threads);

    ProbeReport rep;
    rep.rebalancing_steps = steps;
    rep.pass = true;
    double worst = -1.0;
    for (std::size_t c = 0; c < nc; ++c) {
        ClaimResult r;
        r.claim = claims[c].to_string();
        r.value0 = value[c].on_slice(0, e.diffusion.x0);
        std::vector<double> e2(cfg.paths), p2(cfg.paths);
        for (std::size_t p = 0; p < cfg.paths; ++p) {
            e2[p] = err[c][p] * err[c][p];
            p2[p] = payoff[c][p] * payoff[c][p];
        }
        r.rms_error = std::sqrt(pairwise_sum(e2) / static_cast<double>(cfg.paths));
        const double scale = std::sqrt(pairwise_sum(p2) / static_cast<double>(cfg.paths));
        r.relative_rms = scale > 0.0 ? r.rms_error / scale : r.rms_error;
        r.pass = r.relative_rms < cfg.rms_bound;
        rep.pass = rep.pass && r.pass;
        if (r.relative_rms > worst) {
            worst = r.relative_rms;
            rep.worst = c;
        }
        rep.claims.push_back(std::move(r));
    }
    return rep;
}

} // namespace radner
