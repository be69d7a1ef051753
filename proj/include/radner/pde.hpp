#pragma once

#include "radner/diffusion.hpp"
#include "radner/grid_function.hpp"

#include <functional>
#include <span>
#include <vector>

namespace radner {

struct PdeOptions {
    double peclet_limit = 2.0;       // upwind first-order terms above this cell Peclet number
    double instability_slack = 0.05; // allowed overshoot as a fraction of the admissible range
    std::size_t threads = 0;
};

// Backward solver for
//
//   v_t + 1/2 tr(sigma sigma^T D^2 v) + b . grad v + c v + s = 0,   v(1, .) = terminal
//
// on the truncated box. Crank-Nicolson in one dimension; Douglas ADI with
// theta = 1/2 and an explicit mixed term in two. Box faces use linear
// extrapolation (zero second normal derivative).
class BackwardSolver {
public:
    BackwardSolver(const DiffusionSpec& spec, TimeGrid times, SpatialGrid space, ScalarField potential = {},
                   ScalarField source = {}, PdeOptions options = {});

    GridFunction solve(std::span<const double> terminal) const;
    GridFunction solve(const std::function<double(State)>& terminal) const;

    // Carries data on slice `from` back to slice `to` < from.
    std::vector<double> propagate(std::size_t from, std::size_t to, std::vector<double> data) const;

    const TimeGrid& times() const { return times_; }
    const SpatialGrid& space() const { return space_; }

    // Node values of a state function on the spatial grid.
    std::vector<double> sample(const std::function<double(State)>& f) const;

private:
    struct Slice {
        std::vector<double> drift;     // [axis][node]
        std::vector<double> diffusion; // 1/2 (sigma sigma^T)_ii, [axis][node]
        std::vector<double> cross;     // (sigma sigma^T)_01, 2-d only
        std::vector<double> potential;
        std::vector<double> source;
        double pot_min = 0.0, pot_max = 0.0, src_min = 0.0, src_max = 0.0;
    };

    Slice coefficients(std::size_t k) const;
    void step(std::size_t k, const Slice& now, const Slice& next, std::span<const double> v_next,
              std::span<double> v_out) const;
    void extrapolate_faces(std::span<double> v) const;
    void line_coefficients(const Slice& s, std::size_t axis, std::size_t node, double& lo, double& mid,
                           double& hi) const;

    const DiffusionSpec* spec_;
    TimeGrid times_;
    SpatialGrid space_;
    ScalarField potential_;
    ScalarField source_;
    PdeOptions options_;
};

} // namespace radner
