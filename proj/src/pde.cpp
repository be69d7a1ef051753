#include "radner/pde.hpp"

#include "radner/error.hpp"
#include "radner/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace radner {

BackwardSolver::BackwardSolver(const DiffusionSpec& spec, TimeGrid times, SpatialGrid space, ScalarField potential,
                               ScalarField source, PdeOptions options)
    : spec_(&spec), times_(std::move(times)), space_(std::move(space)), potential_(std::move(potential)),
      source_(std::move(source)), options_(options) {
    spec.check();
    const std::size_t d = space_.dimension();
    if (d != spec.dimension) throw ConfigError("PDE grid dimension differs from the diffusion dimension");
    if (d > 2) throw ConfigError(fmt::format("PDE surfaces support d <= 2, got d = {}", d));
    for (std::size_t i = 0; i < d; ++i)
        if (space_.points(i) < 4) throw ConfigError("PDE grids need at least 4 points per axis");
}

std::vector<double> BackwardSolver::sample(const std::function<double(State)>& f) const {
    std::vector<double> out(space_.node_count());
    parallel_for(
        out.size(),
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> x(space_.dimension());
            for (std::size_t node = begin; node < end; ++node) {
                space_.node_state(node, x);
                out[node] = f(x);
            }
        },
        options_.threads);
    return out;
}

BackwardSolver::Slice BackwardSolver::coefficients(std::size_t k) const {
    const std::size_t d = space_.dimension();
    const std::size_t n = space_.node_count();
    const double t = times_[k];
    Slice s;
    s.drift.resize(d * n);
    s.diffusion.resize(d * n);
    if (d == 2) s.cross.resize(n);
    s.potential.assign(n, 0.0);
    s.source.assign(n, 0.0);
    parallel_for(
        n,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> x(d), b(d), sig(d * d);
            for (std::size_t node = begin; node < end; ++node) {
                space_.node_state(node, x);
                spec_->drift_into(t, x, b);
                spec_->volatility_into(t, x, sig);
                for (std::size_t i = 0; i < d; ++i) {
                    double aii = 0.0;
                    for (std::size_t j = 0; j < d; ++j) aii += sig[i * d + j] * sig[i * d + j];
                    s.drift[i * n + node] = b[i];
                    s.diffusion[i * n + node] = 0.5 * aii;
                }
                if (d == 2) s.cross[node] = sig[0] * sig[2] + sig[1] * sig[3];
                if (potential_) s.potential[node] = potential_(t, x);
                if (source_) s.source[node] = source_(t, x);
                if (!std::isfinite(s.potential[node]) || !std::isfinite(s.source[node]))
                    throw EvaluationError(fmt::format("non-finite PDE coefficient at t={} node {}", t, node));
            }
        },
        options_.threads);
    auto [pmin, pmax] = std::minmax_element(s.potential.begin(), s.potential.end());
    auto [smin, smax] = std::minmax_element(s.source.begin(), s.source.end());
    s.pot_min = *pmin;
    s.pot_max = *pmax;
    s.src_min = *smin;
    s.src_max = *smax;
    return s;
}

void BackwardSolver::line_coefficients(const Slice& s, std::size_t axis, std::size_t node, double& lo, double& mid,
                                       double& hi) const {
    const std::size_t n = space_.node_count();
    const double h = space_.spacing(axis);
    const double D = s.diffusion[axis * n + node];
    const double mu = s.drift[axis * n + node];
    const double dd = D / (h * h);
    if (std::abs(mu) * h > options_.peclet_limit * D) {
        if (mu > 0.0) {
            lo = dd;
            hi = dd + mu / h;
            mid = -2.0 * dd - mu / h;
        } else {
            lo = dd - mu / h;
            hi = dd;
            mid = -2.0 * dd + mu / h;
        }
    } else {
        lo = dd - mu / (2.0 * h);
        hi = dd + mu / (2.0 * h);
        mid = -2.0 * dd;
    }
}

void BackwardSolver::extrapolate_faces(std::span<double> v) const {
    const std::size_t d = space_.dimension();
    for (std::size_t axis = 0; axis < d; ++axis) {
        const std::size_t s = space_.stride(axis);
        const std::size_t last = space_.points(axis) - 1;
        for (std::size_t node = 0; node < space_.node_count(); ++node) {
            const std::size_t j = space_.axis_index(node, axis);
            if (j == 0) v[node] = 2.0 * v[node + s] - v[node + 2 * s];
            else if (j == last) v[node] = 2.0 * v[node - s] - v[node - 2 * s];
        }
    }
}

void BackwardSolver::step(std::size_t k, const Slice& now, const Slice& next, std::span<const double> V,
                          std::span<double> out) const {
    const std::size_t d = space_.dimension();
    const std::size_t n = space_.node_count();
    const double dt = times_.dt(k);
    const double share = 1.0 / static_cast<double>(d);

    // Explicit predictor Y0 = V + dt (A V + mean source) on interior nodes.
    std::vector<double> Y(V.begin(), V.end());
    std::vector<double> AV(d * n, 0.0);  // axis parts of A(t_{k+1}) V including potential share
    for (std::size_t node = 0; node < n; ++node) {
        if (space_.is_boundary(node)) continue;
        double total = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double lo, mid, hi;
            line_coefficients(next, i, node, lo, mid, hi);
            const std::size_t s = space_.stride(i);
            const double part =
                lo * V[node - s] + mid * V[node] + hi * V[node + s] + share * next.potential[node] * V[node];
            AV[i * n + node] = part;
            total += part;
        }
        if (d == 2) {
            const std::size_t s0 = space_.stride(0), s1 = space_.stride(1);
            const double mixed = V[node + s0 + s1] - V[node + s0 - s1] - V[node - s0 + s1] + V[node - s0 - s1];
            total += next.cross[node] * mixed / (4.0 * space_.spacing(0) * space_.spacing(1));
        }
        Y[node] = V[node] + dt * (total + 0.5 * (now.source[node] + next.source[node]));
    }

    // Implicit corrections, one axis at a time.
    for (std::size_t axis = 0; axis < d; ++axis) {
        const std::size_t N = space_.points(axis);
        const std::size_t s = space_.stride(axis);
        std::vector<std::size_t> starts;
        for (std::size_t node = 0; node < n; ++node) {
            if (space_.axis_index(node, axis) != 0) continue;
            bool interior = true;
            for (std::size_t other = 0; other < d; ++other) {
                if (other == axis) continue;
                const std::size_t j = space_.axis_index(node, other);
                if (j == 0 || j + 1 == space_.points(other)) interior = false;
            }
            if (interior) starts.push_back(node);
        }
        std::vector<double> Ynew(Y);
        parallel_for(
            starts.size(),
            [&](std::size_t begin, std::size_t end) {
                const std::size_t m = N - 2;
                std::vector<double> a(m), b(m), c(m), r(m);
                for (std::size_t line = begin; line < end; ++line) {
                    const std::size_t start = starts[line];
                    for (std::size_t j = 0; j < m; ++j) {
                        const std::size_t node = start + (j + 1) * s;
                        double lo, mid, hi;
                        line_coefficients(now, axis, node, lo, mid, hi);
                        mid += share * now.potential[node];
                        a[j] = -0.5 * dt * lo;
                        b[j] = 1.0 - 0.5 * dt * mid;
                        c[j] = -0.5 * dt * hi;
                        r[j] = Y[node] - 0.5 * dt * AV[axis * n + node];
                    }
                    // Fold v_0 = 2 v_1 - v_2 and the mirror image into the end rows.
                    b[0] += 2.0 * a[0];
                    c[0] -= a[0];
                    b[m - 1] += 2.0 * c[m - 1];
                    a[m - 1] -= c[m - 1];
                    // Thomas algorithm.
                    for (std::size_t j = 1; j < m; ++j) {
                        const double f = a[j] / b[j - 1];
                        b[j] -= f * c[j - 1];
                        r[j] -= f * r[j - 1];
                    }
                    r[m - 1] /= b[m - 1];
                    for (std::size_t j = m - 1; j-- > 0;) r[j] = (r[j] - c[j] * r[j + 1]) / b[j];
                    for (std::size_t j = 0; j < m; ++j) Ynew[start + (j + 1) * s] = r[j];
                }
            },
            options_.threads);
        Y.swap(Ynew);
    }
    extrapolate_faces(Y);

    // Instability guard: the new range may exceed what the reaction and
    // source terms allow over one step by at most the configured slack.
    auto [vmin_it, vmax_it] = std::minmax_element(V.begin(), V.end());
    const double vmin = *vmin_it, vmax = *vmax_it;
    const double cmin = std::min(now.pot_min, next.pot_min), cmax = std::max(now.pot_max, next.pot_max);
    const double smin = std::min(now.src_min, next.src_min), smax = std::max(now.src_max, next.src_max);
    const double upper = std::max({vmax * std::exp(cmax * dt), vmax * std::exp(cmin * dt)}) + dt * std::max(smax, 0.0);
    const double lower = std::min({vmin * std::exp(cmax * dt), vmin * std::exp(cmin * dt)}) + dt * std::min(smin, 0.0);
    // The rational reaction factor of the scheme differs from the exponential
    // at third order in c dt; allow for it relative to the data magnitude.
    const double cdt = std::max(std::abs(cmin), std::abs(cmax)) * dt;
    const double slack = options_.instability_slack * (upper - lower) +
                         (1e-12 + cdt * cdt) * std::max({std::abs(upper), std::abs(lower), 1e-300});
    auto [ymin_it, ymax_it] = std::minmax_element(Y.begin(), Y.end());
    if (!std::isfinite(*ymin_it) || !std::isfinite(*ymax_it) || *ymax_it > upper + slack || *ymin_it < lower - slack) {
        throw SolverError(fmt::format(
            "finite-difference step at t={} left the admissible range [{}, {}] (got [{}, {}]); refine the grid",
            times_[k], lower, upper, *ymin_it, *ymax_it));
    }
    std::copy(Y.begin(), Y.end(), out.begin());
}

std::vector<double> BackwardSolver::propagate(std::size_t from, std::size_t to, std::vector<double> data) const {
    if (from >= times_.size() || to > from) throw ConfigError("invalid propagation range");
    if (data.size() != space_.node_count()) throw ConfigError("data size differs from the spatial grid");
    std::vector<double> out(data.size());
    Slice next = coefficients(from);
    for (std::size_t k = from; k-- > to;) {
        Slice now = coefficients(k);
        step(k, now, next, data, out);
        data.swap(out);
        next = std::move(now);
    }
    return data;
}

GridFunction BackwardSolver::solve(std::span<const double> terminal) const {
    if (terminal.size() != space_.node_count()) throw ConfigError("terminal data size differs from the spatial grid");
    for (double v : terminal)
        if (!std::isfinite(v)) throw EvaluationError("non-finite terminal data");
    GridFunction g(times_, space_);
    const std::size_t last = times_.size() - 1;
    std::copy(terminal.begin(), terminal.end(), g.slice(last).begin());
    Slice next = coefficients(last);
    for (std::size_t k = last; k-- > 0;) {
        Slice now = coefficients(k);
        step(k, now, next, g.slice(k + 1), g.slice(k));
        next = std::move(now);
    }
    return g;
}

GridFunction BackwardSolver::solve(const std::function<double(State)>& terminal) const {
    return solve(sample(terminal));
}

} // namespace radner
