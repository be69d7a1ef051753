#pragma once

#include "radner/expression.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace radner {

using ScalarField = std::function<double(double t, State x)>;

// dX = b(t, X) dt + sigma(t, X) dW on t in [0, 1].
struct DiffusionSpec {
    std::size_t dimension = 1;
    std::vector<double> x0;
    std::vector<Expr> drift;      // d entries
    std::vector<Expr> volatility; // d*d entries, row-major
    double inverse_bound = 1.0;   // bound on |sigma^{-1}| (Frobenius)
    // Optional modulus of continuity in x for sigma; empty if not supplied.
    std::function<double(double)> continuity_modulus;

    // Throws ConfigError on inconsistent shapes or nonpositive bound.
    void check() const;

    void drift_into(double t, State x, std::span<double> out) const;
    void volatility_into(double t, State x, std::span<double> out) const;
};

class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> times);

    // n_points equally spaced nodes 0 = t_0 < ... < t_{n-1} = 1.
    static TimeGrid uniform(std::size_t n_points);

    std::size_t size() const { return times_.size(); }
    std::size_t intervals() const { return times_.size() - 1; }
    double operator[](std::size_t k) const { return times_[k]; }
    double dt(std::size_t k) const { return times_[k + 1] - times_[k]; }
    std::span<const double> times() const { return times_; }

    // Largest k with t_k <= t (clamped to the last interval).
    std::size_t interval_of(double t) const;

    bool operator==(const TimeGrid&) const = default;

private:
    std::vector<double> times_;
};

// Tensor-product box truncating R^d for the PDE solvers. Node numbering is
// row-major: the last axis varies fastest.
class SpatialGrid {
public:
    SpatialGrid() = default;
    SpatialGrid(std::vector<double> lower, std::vector<double> upper, std::vector<std::size_t> points);

    // Box X0 +- half_width_sigmas * (per-axis sigma scale) + drift excursion.
    static SpatialGrid around(const DiffusionSpec& spec, std::size_t points_per_axis,
                              double half_width_sigmas = 8.0);

    std::size_t dimension() const { return lower_.size(); }
    double lower(std::size_t axis) const { return lower_[axis]; }
    double upper(std::size_t axis) const { return upper_[axis]; }
    std::size_t points(std::size_t axis) const { return points_[axis]; }
    double spacing(std::size_t axis) const {
        return (upper_[axis] - lower_[axis]) / static_cast<double>(points_[axis] - 1);
    }
    double coordinate(std::size_t axis, std::size_t j) const {
        return lower_[axis] + spacing(axis) * static_cast<double>(j);
    }
    std::size_t stride(std::size_t axis) const { return strides_[axis]; }
    std::size_t node_count() const { return node_count_; }

    void node_state(std::size_t node, std::span<double> x) const;
    std::size_t axis_index(std::size_t node, std::size_t axis) const {
        return (node / strides_[axis]) % points_[axis];
    }
    bool is_boundary(std::size_t node) const;
    bool contains(State x) const;

    // Core region |x - center| <= core_sigmas * scale on every axis, used for
    // closed-form error metrics away from the truncation boundary.
    void set_core(std::vector<double> center, std::vector<double> scale) {
        center_ = std::move(center);
        scale_ = std::move(scale);
    }
    bool in_core(State x, double core_sigmas = 3.0) const;

    bool operator==(const SpatialGrid&) const = default;

private:
    std::vector<double> lower_, upper_;
    std::vector<std::size_t> points_, strides_;
    std::size_t node_count_ = 0;
    std::vector<double> center_, scale_;
};

// Per-path x per-time scalar array.
struct PathArray {
    std::size_t n_paths = 0;
    std::size_t n_times = 0;
    std::vector<double> values;

    PathArray() = default;
    PathArray(std::size_t paths, std::size_t times, double fill = 0.0)
        : n_paths(paths), n_times(times), values(paths * times, fill) {}

    double& operator()(std::size_t p, std::size_t k) { return values[p * n_times + k]; }
    double operator()(std::size_t p, std::size_t k) const { return values[p * n_times + k]; }
    std::span<const double> row(std::size_t p) const { return {values.data() + p * n_times, n_times}; }
    std::span<double> row(std::size_t p) { return {values.data() + p * n_times, n_times}; }
    double terminal(std::size_t p) const { return (*this)(p, n_times - 1); }
};

struct PathBundle {
    TimeGrid times;
    std::size_t n_paths = 0;
    std::size_t dimension = 0;
    std::uint64_t seed = 0;
    std::vector<double> states;      // [path][time][axis]
    std::vector<double> increments;  // [path][interval][axis]

    std::size_t n_times() const { return times.size(); }
    State state(std::size_t p, std::size_t k) const {
        return {states.data() + (p * times.size() + k) * dimension, dimension};
    }
    State increment(std::size_t p, std::size_t k) const {
        return {increments.data() + (p * times.intervals() + k) * dimension, dimension};
    }
    State terminal_state(std::size_t p) const { return state(p, times.size() - 1); }
};

struct ModulusSample {
    double epsilon = 0.0;
    double max_difference = 0.0;  // sup |sigma(t,x) - sigma(t,y)| over |x-y| = epsilon
    double bound = -1.0;          // omega(epsilon) when a modulus was supplied
};

struct CoefficientReport {
    double max_inverse_norm = 0.0;
    double max_drift_norm = 0.0;
    double max_volatility_norm = 0.0;
    double inverse_bound = 0.0;
    double worst_t = 0.0;
    std::vector<double> worst_x;
    std::vector<ModulusSample> modulus_table;
    std::size_t samples = 0;
    bool violation = false;
    std::vector<std::string> notes;
};

// Samples b and sigma on tgrid x grid. Flags a violation when the inverse
// bound fails (a singular sigma counts as an infinite inverse norm).
// Non-finite coefficients throw EvaluationError with the location.
CoefficientReport validate_coefficients(const DiffusionSpec& spec, const SpatialGrid& grid,
                                        const TimeGrid& tgrid);

// Independent generator for path p. Paths never share state, so the first
// n paths of any bundle with the same seed are identical.
std::mt19937_64 path_rng(std::uint64_t seed, std::size_t path);

// One Euler-Maruyama step applied in place; dw holds the Brownian increment.
void euler_step(const DiffusionSpec& spec, double t, double dt, std::span<double> x, State dw,
                std::span<double> scratch);

// Euler-Maruyama bundle. Requires validate_coefficients to have passed or
// to have been waived by the caller.
PathBundle simulate_paths(const DiffusionSpec& spec, const TimeGrid& tgrid, std::size_t n_paths,
                          std::uint64_t seed, std::size_t threads = 0);

// Cumulative trapezoidal integral of g(t, X_t) along every path; column 0
// is zero.
PathArray path_integral(const PathBundle& bundle, const ScalarField& g, std::size_t threads = 0);
PathArray path_integral(const PathBundle& bundle, const Expr& g, std::size_t threads = 0);

} // namespace radner
