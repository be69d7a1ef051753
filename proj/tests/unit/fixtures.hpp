#pragma once

#include "radner/economy.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace fixtures {

using namespace radner;

inline DiffusionSpec brownian(double sigma = 1.0, double drift = 0.0, double x0 = 0.0) {
    DiffusionSpec s;
    s.dimension = 1;
    s.x0 = {x0};
    s.drift = {Expr::constant(drift)};
    s.volatility = {Expr::constant(sigma)};
    s.inverse_bound = sigma > 0.0 ? 1.0 / sigma : 1.0;
    return s;
}

inline AgentSpec agent(const std::string& name, UtilityFn u, double share) {
    return {name, u, u, Expr::constant(share), Expr::constant(share)};
}

// d = 1 Brownian state, one log agent, G = 1, q = r = h = 0, H(x) = x,
// one stock with F(x) = x and no dividend.
inline EconomySpec benchmark() {
    EconomySpec e;
    e.diffusion = brownian();
    e.H = Expr::affine(0.0, 1.0, 0);
    e.stocks = {{"x", Expr::affine(0.0, 1.0, 0)}};
    e.agents = {agent("log", UtilityFn::log(), 1.0)};
    return e;
}

inline std::shared_ptr<const EconomySpec> shared(EconomySpec e) {
    return std::make_shared<const EconomySpec>(std::move(e));
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

} // namespace fixtures
