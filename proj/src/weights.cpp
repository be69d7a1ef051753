#include "radner/weights.hpp"

#include "radner/error.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace radner {

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw ConfigError("weight vector is empty");
    double total = 0.0;
    for (double v : w_) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError(fmt::format("weight vector has an invalid entry: {}", to_string()));
        total += v;
    }
    if (std::abs(total - 1.0) > sum_tolerance)
        throw ConfigError(fmt::format("weights {} sum to {}, not 1", to_string(), total));
}

WeightVector WeightVector::normalized(std::vector<double> w) {
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("cannot normalize a negative weight");
        total += v;
    }
    if (!(total > 0.0)) throw ConfigError("all weights are zero");
    for (double& v : w) v /= total;
    return WeightVector(std::move(w));
}

WeightVector WeightVector::uniform(std::size_t m) {
    if (m == 0) throw ConfigError("weight vector is empty");
    return WeightVector(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

double WeightVector::min() const {
    return w_.empty() ? 0.0 : *std::min_element(w_.begin(), w_.end());
}

std::string WeightVector::to_string() const { return fmt::format("({})", fmt::join(w_, ", ")); }

} // namespace radner
