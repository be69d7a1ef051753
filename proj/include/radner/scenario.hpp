#pragma once

#include "radner/economy.hpp"
#include "radner/negishi.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace radner {

struct GridSettings {
    std::size_t nt = 201;   // time points
    std::size_t nx = 401;   // points per spatial axis
    double half_width = 8.0;

    bool operator==(const GridSettings&) const = default;
};

struct MonteCarloSettings {
    std::size_t paths = 20000;
    std::size_t times = 0;  // time points of the path grid; 0 uses grid.nt

    bool operator==(const MonteCarloSettings&) const = default;
};

struct VerifySettings {
    double t1 = 0.25;
    double t2 = 1.0;
    std::size_t bins = 5;
    std::size_t martingale_paths = 50000;
    double interpolation_tolerance = 2e-3;
    double normalization_floor = 1e-3;

    bool operator==(const VerifySettings&) const = default;
};

struct CompletenessSettings {
    double relative_threshold = 1e-6;
    double fraction_tolerance = 1e-3;
    std::vector<Expr> claims;
    std::size_t random_claims = 2;
    std::size_t probe_paths = 10000;
    std::size_t substeps = 60;
    double rms_bound = 0.01;

    bool operator==(const CompletenessSettings&) const = default;
};

struct Scenario {
    std::string name;
    std::string description;
    std::uint64_t seed = 1;
    std::string reference;  // "gaussian" enables closed-form error tables
    EconomySpec economy;
    SolverConfig solver;
    GridSettings grid;
    MonteCarloSettings mc;
    VerifySettings verify;
    CompletenessSettings completeness;

    bool operator==(const Scenario& other) const;
};

// Throws ConfigError naming the field and line on malformed input.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string emit_scenario(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);

} // namespace radner
