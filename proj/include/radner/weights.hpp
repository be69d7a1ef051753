#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace radner {

// Point of the probability simplex: w^m >= 0 and sum w^m = 1.
class WeightVector {
public:
    static constexpr double sum_tolerance = 1e-12;

    WeightVector() = default;
    // Validates; throws ConfigError on negative entries, empty input, or a
    // sum further than sum_tolerance from 1.
    explicit WeightVector(std::vector<double> w);

    // Rescales a nonnegative vector onto the simplex.
    static WeightVector normalized(std::vector<double> w);
    static WeightVector uniform(std::size_t m);

    std::size_t size() const { return w_.size(); }
    double operator[](std::size_t m) const { return w_[m]; }
    std::span<const double> values() const { return w_; }
    double min() const;
    bool interior() const { return min() > 0.0; }

    std::string to_string() const;
    bool operator==(const WeightVector&) const = default;

private:
    std::vector<double> w_;
};

} // namespace radner
