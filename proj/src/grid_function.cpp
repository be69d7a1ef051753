#include "radner/grid_function.hpp"

#include "radner/error.hpp"

#include <algorithm>
#include <cmath>

namespace radner {

GridFunction::GridFunction(TimeGrid times, SpatialGrid space, double fill)
    : times_(std::move(times)), space_(std::move(space)), values_(times_.size() * space_.node_count(), fill) {
    if (space_.dimension() > 8) throw ConfigError("grid functions support at most 8 state axes");
}

double GridFunction::on_slice(std::size_t k, State x) const {
    const std::size_t d = space_.dimension();
    if (x.size() != d) throw EvaluationError("grid function evaluated with the wrong state dimension");
    std::size_t base = 0;
    double frac[8];
    std::size_t stride[8];
    for (std::size_t i = 0; i < d; ++i) {
        const double h = space_.spacing(i);
        const double xi = std::clamp(x[i], space_.lower(i), space_.upper(i));
        double s = (xi - space_.lower(i)) / h;
        std::size_t j = static_cast<std::size_t>(std::floor(s));
        if (j >= space_.points(i) - 1) j = space_.points(i) - 2;
        frac[i] = s - static_cast<double>(j);
        base += j * space_.stride(i);
        stride[i] = space_.stride(i);
    }
    const double* v = values_.data() + k * slice_size();
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
        double wgt = 1.0;
        std::size_t idx = base;
        for (std::size_t i = 0; i < d; ++i) {
            if (corner & (std::size_t{1} << i)) {
                wgt *= frac[i];
                idx += stride[i];
            } else {
                wgt *= 1.0 - frac[i];
            }
        }
        if (wgt != 0.0) acc += wgt * v[idx];
    }
    return acc;
}

double GridFunction::operator()(double t, State x) const {
    const double tc = std::clamp(t, 0.0, 1.0);
    const std::size_t k = times_.interval_of(tc);
    const double w = (tc - times_[k]) / times_.dt(k);
    const double lo = on_slice(k, x);
    if (w == 0.0) return lo;
    const double hi = on_slice(k + 1, x);
    if (w == 1.0) return hi;
    return (1.0 - w) * lo + w * hi;
}

GridFunction GridFunction::gradient(std::size_t axis) const {
    if (axis >= space_.dimension()) throw ConfigError("gradient axis out of range");
    GridFunction out(times_, space_);
    const std::size_t n = space_.points(axis);
    const std::size_t s = space_.stride(axis);
    const double h = space_.spacing(axis);
    for (std::size_t k = 0; k < times_.size(); ++k) {
        const double* v = values_.data() + k * slice_size();
        double* g = out.values_.data() + k * slice_size();
        for (std::size_t node = 0; node < slice_size(); ++node) {
            const std::size_t j = space_.axis_index(node, axis);
            if (j == 0)
                g[node] = (-3.0 * v[node] + 4.0 * v[node + s] - v[node + 2 * s]) / (2.0 * h);
            else if (j + 1 == n)
                g[node] = (3.0 * v[node] - 4.0 * v[node - s] + v[node - 2 * s]) / (2.0 * h);
            else
                g[node] = (v[node + s] - v[node - s]) / (2.0 * h);
        }
    }
    return out;
}

double GridFunction::min() const { return *std::min_element(values_.begin(), values_.end()); }
double GridFunction::max() const { return *std::max_element(values_.begin(), values_.end()); }

bool GridFunction::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

} // namespace radner
