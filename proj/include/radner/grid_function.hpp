#pragma once

#include "radner/diffusion.hpp"

#include <span>
#include <vector>

namespace radner {

// Values on TimeGrid x SpatialGrid, stored slice by slice ([time][node]).
// Evaluation off the nodes is multilinear in (t, x) and clamps to the box.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(TimeGrid times, SpatialGrid space, double fill = 0.0);

    const TimeGrid& times() const { return times_; }
    const SpatialGrid& space() const { return space_; }
    std::size_t slice_size() const { return space_.node_count(); }

    double& at(std::size_t k, std::size_t node) { return values_[k * slice_size() + node]; }
    double at(std::size_t k, std::size_t node) const { return values_[k * slice_size() + node]; }
    std::span<double> slice(std::size_t k) { return {values_.data() + k * slice_size(), slice_size()}; }
    std::span<const double> slice(std::size_t k) const { return {values_.data() + k * slice_size(), slice_size()}; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    double operator()(double t, State x) const;
    // Multilinear in x on slice k.
    double on_slice(std::size_t k, State x) const;

    // d/dx_axis by central differences (second-order one-sided at the box
    // faces).
    GridFunction gradient(std::size_t axis) const;

    double min() const;
    double max() const;
    bool all_finite() const;

    bool operator==(const GridFunction&) const = default;

private:
    TimeGrid times_;
    SpatialGrid space_;
    std::vector<double> values_;
};

} // namespace radner
