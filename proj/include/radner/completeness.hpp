#pragma once

#include "radner/expression.hpp"
#include "radner/grid_function.hpp"
#include "radner/pricing.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace radner {

struct DispersionConfig {
    // A node fails when sigma_min <= relative_threshold * reference_scale,
    // where reference_scale = rms(s) * max_i(sigma scale_i / box width_i).
    double relative_threshold = 1e-6;
    double fraction_tolerance = 1e-3;
};

struct DispersionReport {
    std::size_t J = 0;
    std::size_t d = 0;
    GridFunction sigma_min;          // every slice; only t < 1 interior nodes are judged
    std::vector<double> matrices;    // [slice][node][j][i], D = grad s^T sigma
    double reference_scale = 0.0;
    double threshold = 0.0;
    std::size_t evaluated = 0;
    std::size_t failures = 0;
    double failure_fraction = 0.0;
    double min_sigma = 0.0;
    double max_sigma = 0.0;
    double core_min_sigma = 0.0;     // over the core region
    double core_max_sigma = 0.0;
    bool pass = false;
    std::vector<std::size_t> first_failures;  // slice * nodes + node, at most 20

    const double* matrix(std::size_t k, std::size_t node) const {
        return matrices.data() + (k * sigma_min.slice_size() + node) * J * d;
    }
};

DispersionReport dispersion(const EquilibriumSolution& sol, const DispersionConfig& cfg = {});

struct ProbeConfig {
    std::vector<Expr> claims;       // explicit claims phi(X_1)
    std::size_t random_claims = 2;  // extra random quadratics
    std::size_t paths = 10000;
    std::size_t substeps = 60;      // rebalancing steps per PDE time interval
    std::uint64_t seed = 1;
    double rms_bound = 0.01;
    std::size_t threads = 0;
};

struct ClaimResult {
    std::string claim;
    double value0 = 0.0;        // c(0, X0)
    double rms_error = 0.0;
    double relative_rms = 0.0;  // rms error / rms payoff
    bool pass = false;
};

struct ProbeReport {
    std::vector<ClaimResult> claims;
    std::size_t worst = 0;
    std::size_t rebalancing_steps = 0;
    bool pass = false;
};

// Values each claim by its PDE surface c = w / v, hedges it with the
// stocks along freshly simulated fine-grid paths, and compares the
// self-financing terminal wealth with the payoff. Refuses to run
// (CompletenessError) when the dispersion report failed.
ProbeReport martingale_uniqueness_probe(const EquilibriumSolution& sol, const DispersionReport& disp,
                                        const ProbeConfig& cfg);

} // namespace radner
