#include "radner/diffusion.hpp"

#include "radner/error.hpp"
#include "radner/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace radner {

void DiffusionSpec::check() const {
    if (dimension == 0) throw ConfigError("diffusion dimension must be positive");
    if (x0.size() != dimension)
        throw ConfigError(fmt::format("x0 has length {} but dimension is {}", x0.size(), dimension));
    if (drift.size() != dimension)
        throw ConfigError(fmt::format("drift has {} entries, expected {}", drift.size(), dimension));
    if (volatility.size() != dimension * dimension)
        throw ConfigError(fmt::format("volatility has {} entries, expected {}", volatility.size(),
                                      dimension * dimension));
    if (!(inverse_bound > 0.0)) throw ConfigError("inverse_bound must be positive");
    for (const auto& e : drift)
        if (e.arity() > dimension) throw ConfigError("drift references an axis beyond the dimension");
    for (const auto& e : volatility)
        if (e.arity() > dimension) throw ConfigError("volatility references an axis beyond the dimension");
}

void DiffusionSpec::drift_into(double t, State x, std::span<double> out) const {
    for (std::size_t i = 0; i < dimension; ++i) out[i] = drift[i](t, x);
}

void DiffusionSpec::volatility_into(double t, State x, std::span<double> out) const {
    for (std::size_t i = 0; i < dimension * dimension; ++i) out[i] = volatility[i](t, x);
}

// ---------------------------------------------------------------- TimeGrid

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw ConfigError("time grid needs at least two points");
    if (times_.front() != 0.0 || times_.back() != 1.0)
        throw ConfigError("time grid must start at 0 and end at 1");
    for (std::size_t k = 1; k < times_.size(); ++k)
        if (!(times_[k] > times_[k - 1])) throw ConfigError("time grid must be strictly increasing");
}

TimeGrid TimeGrid::uniform(std::size_t n_points) {
    if (n_points < 2) throw ConfigError("time grid needs at least two points");
    std::vector<double> t(n_points);
    const double n = static_cast<double>(n_points - 1);
    for (std::size_t k = 0; k < n_points; ++k) t[k] = static_cast<double>(k) / n;
    t.back() = 1.0;
    return TimeGrid(std::move(t));
}

std::size_t TimeGrid::interval_of(double t) const {
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    return std::min(k, intervals() - 1);
}

// ------------------------------------------------------------- SpatialGrid

SpatialGrid::SpatialGrid(std::vector<double> lower, std::vector<double> upper,
                         std::vector<std::size_t> points)
    : lower_(std::move(lower)), upper_(std::move(upper)), points_(std::move(points)) {
    const std::size_t d = lower_.size();
    if (d == 0 || upper_.size() != d || points_.size() != d)
        throw ConfigError("spatial grid bounds and point counts must share one positive dimension");
    strides_.assign(d, 1);
    node_count_ = 1;
    for (std::size_t i = d; i-- > 0;) {
        if (points_[i] < 3) throw ConfigError("spatial grid needs at least 3 points per axis");
        if (!(upper_[i] > lower_[i])) throw ConfigError("spatial grid upper bound must exceed lower bound");
        strides_[i] = node_count_;
        node_count_ *= points_[i];
    }
}

SpatialGrid SpatialGrid::around(const DiffusionSpec& spec, std::size_t points_per_axis,
                                double half_width_sigmas) {
    spec.check();
    const std::size_t d = spec.dimension;
    std::vector<double> scale(d, 0.0), excursion(d, 0.0), sig(d * d), b(d);
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        spec.volatility_into(t, spec.x0, sig);
        spec.drift_into(t, spec.x0, b);
        for (std::size_t i = 0; i < d; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < d; ++j) row += sig[i * d + j] * sig[i * d + j];
            scale[i] = std::max(scale[i], std::sqrt(row));
            excursion[i] = std::max(excursion[i], std::abs(b[i]));
        }
    }
    std::vector<double> lo(d), hi(d);
    for (std::size_t i = 0; i < d; ++i) {
        double half = half_width_sigmas * scale[i] + excursion[i];
        if (half <= 0.0) half = 1.0;
        lo[i] = spec.x0[i] - half;
        hi[i] = spec.x0[i] + half;
    }
    SpatialGrid grid(std::move(lo), std::move(hi), std::vector<std::size_t>(d, points_per_axis));
    grid.set_core(spec.x0, scale);
    return grid;
}

void SpatialGrid::node_state(std::size_t node, std::span<double> x) const {
    for (std::size_t i = 0; i < dimension(); ++i) x[i] = coordinate(i, axis_index(node, i));
}

bool SpatialGrid::is_boundary(std::size_t node) const {
    for (std::size_t i = 0; i < dimension(); ++i) {
        const std::size_t j = axis_index(node, i);
        if (j == 0 || j + 1 == points_[i]) return true;
    }
    return false;
}

bool SpatialGrid::contains(State x) const {
    for (std::size_t i = 0; i < dimension(); ++i)
        if (x[i] < lower_[i] || x[i] > upper_[i]) return false;
    return true;
}

bool SpatialGrid::in_core(State x, double core_sigmas) const {
    for (std::size_t i = 0; i < dimension(); ++i) {
        if (scale_.empty() || scale_[i] <= 0.0) continue;
        if (std::abs(x[i] - center_[i]) > core_sigmas * scale_[i]) return false;
    }
    return true;
}

// ------------------------------------------------------------- validation

namespace {

double frobenius(std::span<const double> m) {
    double acc = 0.0;
    for (double v : m) acc += v * v;
    return std::sqrt(acc);
}

void require_finite(std::span<const double> values, const char* what, double t, State x) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw EvaluationError(fmt::format("non-finite {} at t={} x=[{}]", what, t,
                                              fmt::join(x.begin(), x.end(), ", ")));
        }
    }
}

double inverse_norm(std::span<const double> sig, std::size_t d) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        sig.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
    const double n = lu.inverse().norm();
    return std::isfinite(n) ? n : std::numeric_limits<double>::infinity();
}

} // namespace

CoefficientReport validate_coefficients(const DiffusionSpec& spec, const SpatialGrid& grid,
                                        const TimeGrid& tgrid) {
    spec.check();
    if (grid.dimension() != spec.dimension)
        throw ConfigError("spatial grid dimension differs from the diffusion dimension");
    const std::size_t d = spec.dimension;
    CoefficientReport rep;
    rep.inverse_bound = spec.inverse_bound;
    rep.worst_x.assign(d, 0.0);
    std::vector<double> x(d), sig(d * d), b(d);

    for (std::size_t k = 0; k < tgrid.size(); ++k) {
        const double t = tgrid[k];
        for (std::size_t node = 0; node < grid.node_count(); ++node) {
            grid.node_state(node, x);
            spec.drift_into(t, x, b);
            spec.volatility_into(t, x, sig);
            require_finite(b, "drift", t, x);
            require_finite(sig, "volatility", t, x);
            rep.max_drift_norm = std::max(rep.max_drift_norm, frobenius(b));
            rep.max_volatility_norm = std::max(rep.max_volatility_norm, frobenius(sig));
            const double inv = inverse_norm(sig, d);
            if (inv > rep.max_inverse_norm) {
                rep.max_inverse_norm = inv;
                rep.worst_t = t;
                rep.worst_x = x;
            }
            ++rep.samples;
        }
    }
    rep.violation = !(rep.max_inverse_norm <= spec.inverse_bound);
    if (rep.violation) {
        rep.notes.push_back(fmt::format("|sigma^-1| reaches {} > bound {} at t={} x=[{}]",
                                        rep.max_inverse_norm, spec.inverse_bound, rep.worst_t,
                                        fmt::join(rep.worst_x, ", ")));
    }

    // Empirical modulus of continuity on a thinned set of time slices.
    const std::size_t time_stride = std::max<std::size_t>(1, tgrid.size() / 20);
    std::vector<double> y(d), sig_y(d * d), diff(d * d);
    for (std::size_t offset : {1u, 2u, 4u, 8u, 16u}) {
        ModulusSample row;
        row.epsilon = std::numeric_limits<double>::infinity();
        for (std::size_t axis = 0; axis < d; ++axis) {
            if (offset >= grid.points(axis)) continue;
            row.epsilon = std::min(row.epsilon, offset * grid.spacing(axis));
        }
        if (!std::isfinite(row.epsilon)) continue;
        for (std::size_t k = 0; k < tgrid.size(); k += time_stride) {
            const double t = tgrid[k];
            for (std::size_t node = 0; node < grid.node_count(); ++node) {
                grid.node_state(node, x);
                spec.volatility_into(t, x, sig);
                for (std::size_t axis = 0; axis < d; ++axis) {
                    if (grid.axis_index(node, axis) + offset >= grid.points(axis)) continue;
                    y = x;
                    y[axis] = grid.coordinate(axis, grid.axis_index(node, axis) + offset);
                    spec.volatility_into(t, y, sig_y);
                    for (std::size_t q = 0; q < d * d; ++q) diff[q] = sig[q] - sig_y[q];
                    row.max_difference = std::max(row.max_difference, frobenius(diff));
                }
            }
        }
        if (spec.continuity_modulus) row.bound = spec.continuity_modulus(row.epsilon);
        rep.modulus_table.push_back(row);
    }
    return rep;
}

// ------------------------------------------------------------- simulation

std::mt19937_64 path_rng(std::uint64_t seed, std::size_t path) {
    // SplitMix64 finalizer over (seed, path) gives well-separated substreams.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(path) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return std::mt19937_64(z);
}

void euler_step(const DiffusionSpec& spec, double t, double dt, std::span<double> x, State dw,
                std::span<double> scratch) {
    const std::size_t d = spec.dimension;
    auto b = scratch.first(d);
    auto sig = scratch.subspan(d, d * d);
    spec.drift_into(t, x, b);
    spec.volatility_into(t, x, sig);
    for (std::size_t i = 0; i < d; ++i) {
        double dx = b[i] * dt;
        for (std::size_t j = 0; j < d; ++j) dx += sig[i * d + j] * dw[j];
        scratch[d + d * d + i] = dx;
    }
    for (std::size_t i = 0; i < d; ++i) x[i] += scratch[d + d * d + i];
}

PathBundle simulate_paths(const DiffusionSpec& spec, const TimeGrid& tgrid, std::size_t n_paths,
                          std::uint64_t seed, std::size_t threads) {
    spec.check();
    if (n_paths == 0) throw ConfigError("n_paths must be positive");
    if (tgrid.size() < 2) throw ConfigError("n_steps must be positive");
    const std::size_t d = spec.dimension;
    const std::size_t nt = tgrid.size();
    PathBundle bundle;
    bundle.times = tgrid;
    bundle.n_paths = n_paths;
    bundle.dimension = d;
    bundle.seed = seed;
    bundle.states.resize(n_paths * nt * d);
    bundle.increments.resize(n_paths * (nt - 1) * d);

    parallel_for(
        n_paths,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> x(d), scratch(d + d * d + d);
            for (std::size_t p = begin; p < end; ++p) {
                auto rng = path_rng(seed, p);
                std::normal_distribution<double> normal(0.0, 1.0);
                x.assign(spec.x0.begin(), spec.x0.end());
                std::copy(x.begin(), x.end(), bundle.states.begin() + static_cast<std::ptrdiff_t>(p * nt * d));
                for (std::size_t k = 0; k + 1 < nt; ++k) {
                    const double dt = tgrid.dt(k);
                    const double sq = std::sqrt(dt);
                    double* dw = bundle.increments.data() + (p * (nt - 1) + k) * d;
                    for (std::size_t i = 0; i < d; ++i) dw[i] = sq * normal(rng);
                    euler_step(spec, tgrid[k], dt, x, State(dw, d), scratch);
                    std::copy(x.begin(), x.end(),
                              bundle.states.begin() + static_cast<std::ptrdiff_t>((p * nt + k + 1) * d));
                }
            }
        },
        threads);
    return bundle;
}

PathArray path_integral(const PathBundle& bundle, const ScalarField& g, std::size_t threads) {
    const std::size_t nt = bundle.n_times();
    PathArray out(bundle.n_paths, nt);
    parallel_for(
        bundle.n_paths,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p) {
                double prev = g(bundle.times[0], bundle.state(p, 0));
                if (!std::isfinite(prev))
                    throw EvaluationError(fmt::format("non-finite integrand on path {} at t=0", p));
                double acc = 0.0;
                out(p, 0) = 0.0;
                for (std::size_t k = 1; k < nt; ++k) {
                    const double cur = g(bundle.times[k], bundle.state(p, k));
                    if (!std::isfinite(cur))
                        throw EvaluationError(
                            fmt::format("non-finite integrand on path {} at t={}", p, bundle.times[k]));
                    acc += 0.5 * (prev + cur) * bundle.times.dt(k - 1);
                    out(p, k) = acc;
                    prev = cur;
                }
            }
        },
        threads);
    return out;
}

PathArray path_integral(const PathBundle& bundle, const Expr& g, std::size_t threads) {
    return path_integral(bundle, ScalarField([&g](double t, State x) { return g(t, x); }), threads);
}

} // namespace radner
