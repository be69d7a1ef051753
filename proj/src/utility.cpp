#include "radner/utility.hpp"

#include "radner/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace radner {

namespace detail {

struct UtilityNode {
    UtilityFn::Kind kind = UtilityFn::Kind::crra;
    double a = 1.0;
    Expr nu;
    Expr g;
    double k = 1.0;
    UtilityFn left;
    UtilityFn right;
    SplitterConfig cfg;
};

} // namespace detail

namespace {

using detail::UtilityNode;

constexpr double max_logit = 700.0;

double crra_state_factor_value(double g, State x) {
    if (!(g > 0.0) || !std::isfinite(g))
        throw EvaluationError(fmt::format("CRRA state factor g = {} is not positive at x=[{}]", g,
                                          fmt::join(x.begin(), x.end(), ", ")));
    return g;
}

double crra_state_factor(const UtilityNode& n, double t, State x) { return crra_state_factor_value(n.g(t, x), x); }

void require_positive_consumption(double c) {
    if (!(c > 0.0) || !std::isfinite(c))
        throw EvaluationError(fmt::format("utility evaluated at nonpositive consumption c = {}", c));
}

// ln(e^p + e^q) without overflow.
double log_add_exp(double p, double q) {
    const double m = std::max(p, q);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log1p(std::exp(std::min(p, q) - m));
}

// Strips Scaled wrappers, collecting their factors in order.
const UtilityFn& peel(const UtilityFn& u, std::vector<double>& factors) {
    const UtilityFn* cur = &u;
    while (cur->kind() == UtilityFn::Kind::scaled) {
        factors.push_back(cur->scale_factor());
        cur = &cur->left();
    }
    return *cur;
}

// ln(k1 / k2) after cancelling identical factors, so that a common scaling
// of both sides leaves the result bit-identical.
double log_scale_ratio(std::vector<double> k1, std::vector<double> k2) {
    for (auto it = k1.begin(); it != k1.end();) {
        auto hit = std::find(k2.begin(), k2.end(), *it);
        if (hit != k2.end()) {
            k2.erase(hit);
            it = k1.erase(it);
        } else {
            ++it;
        }
    }
    double acc = 0.0;
    for (double k : k1) acc += std::log(k);
    for (double k : k2) acc -= std::log(k);
    return acc;
}

// c1 = c / (1 + e^{-y}), c2 = c / (1 + e^{y}), each computed on the side
// where it does not cancel.
void logit_parts(double y, double c, double& c1, double& c2) {
    if (y <= 0.0) {
        const double e = std::exp(y);
        c1 = c * (e / (1.0 + e));
        c2 = c / (1.0 + e);
    } else {
        const double e = std::exp(-y);
        c1 = c / (1.0 + e);
        c2 = c * (e / (1.0 + e));
    }
}

// Makes c1 + c2 == c exactly. The part that is at least c/2 is recovered by
// a Sterbenz-exact subtraction.
void exact_parts(double c, double& c1, double& c2) {
    if (c1 <= c2) {
        const double big = c - c1;
        const double small = c - big;
        if (small > 0.0) {
            c1 = small;
            c2 = big;
        }
    } else {
        const double big = c - c2;
        const double small = c - big;
        if (small > 0.0) {
            c2 = small;
            c1 = big;
        }
    }
}

} // namespace

// ------------------------------------------------------------ construction

UtilityFn UtilityFn::crra(double a, Expr nu, Expr g) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError(fmt::format("CRRA risk aversion must be positive, got {}", a));
    auto n = std::make_shared<UtilityNode>();
    n->kind = Kind::crra;
    n->a = a;
    n->nu = std::move(nu);
    n->g = std::move(g);
    return UtilityFn(std::move(n));
}

UtilityFn scale(double k, const UtilityFn& u) {
    if (u.empty()) throw ConfigError("cannot scale an empty utility");
    if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError(fmt::format("utility scale must be positive, got {}", k));
    auto n = std::make_shared<UtilityNode>();
    n->kind = UtilityFn::Kind::scaled;
    n->k = k;
    n->left = u;
    return UtilityFn(std::move(n));
}

UtilityFn add(const UtilityFn& u1, const UtilityFn& u2) {
    if (u1.empty() || u2.empty()) throw ConfigError("cannot add an empty utility");
    auto n = std::make_shared<UtilityNode>();
    n->kind = UtilityFn::Kind::sum;
    n->left = u1;
    n->right = u2;
    return UtilityFn(std::move(n));
}

UtilityFn sup_convolve(const UtilityFn& u1, const UtilityFn& u2, const SplitterConfig& cfg) {
    if (u1.empty() || u2.empty()) throw ConfigError("cannot convolve an empty utility");
    if (!(cfg.tolerance > 0.0) || cfg.max_iterations <= 0 || !(cfg.epsilon > 0.0 && cfg.epsilon < 0.5))
        throw ConfigError("invalid splitter configuration");
    auto n = std::make_shared<UtilityNode>();
    n->kind = UtilityFn::Kind::sup_convolution;
    n->left = u1;
    n->right = u2;
    n->cfg = cfg;
    return UtilityFn(std::move(n));
}

// ----------------------------------------------------------------- splitter

std::pair<double, double> split(const UtilityFn& u1, const UtilityFn& u2, double t, double c, State x,
                                const SplitterConfig& cfg) {
    require_positive_consumption(c);
    std::vector<double> k1, k2;
    const UtilityFn& b1 = peel(u1, k1);
    const UtilityFn& b2 = peel(u2, k2);
    const double shift = log_scale_ratio(std::move(k1), std::move(k2));

    double c1 = 0.0, c2 = 0.0;
    // g(y) = ln u1_c(c1) - ln u2_c(c2) with y = ln(c1 / c2); g is decreasing.
    auto eval = [&](double y, double& dg) {
        logit_parts(y, c, c1, c2);
        if (!(c1 > 0.0) || !(c2 > 0.0)) {
            dg = std::numeric_limits<double>::quiet_NaN();
            return std::numeric_limits<double>::quiet_NaN();
        }
        const double gy = shift + b1.log_u_c(t, c1, x) - b2.log_u_c(t, c2, x);
        dg = -(c1 * (c2 / c)) * (1.0 / b1.tolerance(t, c1, x) + 1.0 / b2.tolerance(t, c2, x));
        return gy;
    };
    auto fail = [&](const char* why) {
        throw SplitterError(fmt::format("sup-convolution split failed ({}) at t={} c={} x=[{}]", why, t, c,
                                        fmt::join(x.begin(), x.end(), ", ")));
    };

    double lo = -std::log((1.0 - cfg.epsilon) / cfg.epsilon);
    double hi = -lo;
    bool lo_known = false, hi_known = false;
    double y = 0.0;
    double dg = 0.0;
    double best_y = 0.0;
    double best_g = std::numeric_limits<double>::infinity();

    for (int it = 0; it < cfg.max_iterations; ++it) {
        const double gy = eval(y, dg);
        if (!std::isfinite(gy)) fail("non-finite marginal");
        if (std::abs(gy) < best_g) {
            best_g = std::abs(gy);
            best_y = y;
        }
        if (std::abs(gy) <= cfg.tolerance) break;
        if (gy > 0.0) {
            lo = y;
            lo_known = true;
        } else {
            hi = y;
            hi_known = true;
        }
        // Root lies beyond an unverified bound: push that bound outward.
        if (gy > 0.0 && !hi_known && y >= hi) {
            if (hi >= max_logit) fail("root not bracketed above");
            hi = std::min(2.0 * hi, max_logit);
        }
        if (gy < 0.0 && !lo_known && y <= lo) {
            if (lo <= -max_logit) fail("root not bracketed below");
            lo = std::max(2.0 * lo, -max_logit);
        }
        if (lo_known && hi_known && hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(y)))
            break;

        double next = y - gy / dg;
        if (!std::isfinite(next) || next <= lo || next >= hi) {
            if (lo_known && hi_known) {
                next = 0.5 * (lo + hi);
            } else {
                next = gy > 0.0 ? hi : lo;
            }
        }
        y = next;
    }
    if (!std::isfinite(best_g)) fail("no finite evaluation");
    logit_parts(best_y, c, c1, c2);
    exact_parts(c, c1, c2);
    return {c1, c2};
}

// ---------------------------------------------------------------- evaluation

double UtilityFn::log_u_c(double t, double c, State x) const {
    require_positive_consumption(c);
    const UtilityNode& n = *node_;
    switch (n.kind) {
    case Kind::crra:
        return n.nu(t, x) + std::log(crra_state_factor(n, t, x)) - n.a * std::log(c);
    case Kind::scaled:
        return std::log(n.k) + n.left.log_u_c(t, c, x);
    case Kind::sum:
        return log_add_exp(n.left.log_u_c(t, c, x), n.right.log_u_c(t, c, x));
    case Kind::sup_convolution: {
        // The larger part carries the finer relative resolution.
        const auto [c1, c2] = split(n.left, n.right, t, c, x, n.cfg);
        return c1 >= c2 ? n.left.log_u_c(t, c1, x) : n.right.log_u_c(t, c2, x);
    }
    }
    return 0.0;
}

double UtilityFn::tolerance(double t, double c, State x) const {
    require_positive_consumption(c);
    const UtilityNode& n = *node_;
    switch (n.kind) {
    case Kind::crra:
        return c / n.a;
    case Kind::scaled:
        return n.left.tolerance(t, c, x);
    case Kind::sum: {
        const double l1 = n.left.log_u_c(t, c, x);
        const double l2 = n.right.log_u_c(t, c, x);
        const double p1 = std::exp(l1 - log_add_exp(l1, l2));
        const double p2 = 1.0 - p1;
        return 1.0 / (p1 / n.left.tolerance(t, c, x) + p2 / n.right.tolerance(t, c, x));
    }
    case Kind::sup_convolution: {
        const auto [c1, c2] = split(n.left, n.right, t, c, x, n.cfg);
        return n.left.tolerance(t, c1, x) + n.right.tolerance(t, c2, x);
    }
    }
    return 0.0;
}

double UtilityFn::u_ct_over_u_c(double t, double c, State x) const {
    require_positive_consumption(c);
    const UtilityNode& n = *node_;
    switch (n.kind) {
    case Kind::crra:
        return n.nu.d_dt(t, x) + n.g.d_dt(t, x) / crra_state_factor(n, t, x);
    case Kind::scaled:
        return n.left.u_ct_over_u_c(t, c, x);
    case Kind::sum: {
        const double l1 = n.left.log_u_c(t, c, x);
        const double l2 = n.right.log_u_c(t, c, x);
        const double p1 = std::exp(l1 - log_add_exp(l1, l2));
        return p1 * n.left.u_ct_over_u_c(t, c, x) + (1.0 - p1) * n.right.u_ct_over_u_c(t, c, x);
    }
    case Kind::sup_convolution: {
        // u_ct / u_cc is additive over the parts at the split.
        const auto [c1, c2] = split(n.left, n.right, t, c, x, n.cfg);
        const double t1 = n.left.tolerance(t, c1, x);
        const double t2 = n.right.tolerance(t, c2, x);
        return (t1 * n.left.u_ct_over_u_c(t, c1, x) + t2 * n.right.u_ct_over_u_c(t, c2, x)) / (t1 + t2);
    }
    }
    return 0.0;
}

double UtilityFn::u_cx_over_u_c(std::size_t axis, double t, double c, State x) const {
    require_positive_consumption(c);
    const UtilityNode& n = *node_;
    switch (n.kind) {
    case Kind::crra:
        return n.nu.d_dx(axis, t, x) + n.g.d_dx(axis, t, x) / crra_state_factor(n, t, x);
    case Kind::scaled:
        return n.left.u_cx_over_u_c(axis, t, c, x);
    case Kind::sum: {
        const double l1 = n.left.log_u_c(t, c, x);
        const double l2 = n.right.log_u_c(t, c, x);
        const double p1 = std::exp(l1 - log_add_exp(l1, l2));
        return p1 * n.left.u_cx_over_u_c(axis, t, c, x) + (1.0 - p1) * n.right.u_cx_over_u_c(axis, t, c, x);
    }
    case Kind::sup_convolution: {
        const auto [c1, c2] = split(n.left, n.right, t, c, x, n.cfg);
        const double t1 = n.left.tolerance(t, c1, x);
        const double t2 = n.right.tolerance(t, c2, x);
        return (t1 * n.left.u_cx_over_u_c(axis, t, c1, x) + t2 * n.right.u_cx_over_u_c(axis, t, c2, x)) /
               (t1 + t2);
    }
    }
    return 0.0;
}

double UtilityFn::u(double t, double c, State x) const {
    require_positive_consumption(c);
    const UtilityNode& n = *node_;
    switch (n.kind) {
    case Kind::crra: {
        const double level = std::exp(n.nu(t, x)) * crra_state_factor(n, t, x);
        if (n.a == 1.0) return level * std::log(c);
        const double b = 1.0 - n.a;
        return level * (std::expm1(b * std::log(c)) / b);
    }
    case Kind::scaled:
        return n.k * n.left.u(t, c, x);
    case Kind::sum:
        return n.left.u(t, c, x) + n.right.u(t, c, x);
    case Kind::sup_convolution: {
        const auto [c1, c2] = split(n.left, n.right, t, c, x, n.cfg);
        return n.left.u(t, c1, x) + n.right.u(t, c2, x);
    }
    }
    return 0.0;
}

double UtilityFn::u_c(double t, double c, State x) const { return std::exp(log_u_c(t, c, x)); }

double UtilityFn::u_cc(double t, double c, State x) const { return -u_c(t, c, x) / tolerance(t, c, x); }

double UtilityFn::u_ct(double t, double c, State x) const { return u_c(t, c, x) * u_ct_over_u_c(t, c, x); }

double UtilityFn::u_cx(std::size_t axis, double t, double c, State x) const {
    return u_c(t, c, x) * u_cx_over_u_c(axis, t, c, x);
}

// ---------------------------------------------------------------- accessors

UtilityFn::Kind UtilityFn::kind() const {
    if (!node_) throw ConfigError("empty utility");
    return node_->kind;
}

double UtilityFn::crra_a() const { return node_->a; }
const Expr& UtilityFn::crra_nu() const { return node_->nu; }
const Expr& UtilityFn::crra_g() const { return node_->g; }
double UtilityFn::scale_factor() const { return node_->k; }
const UtilityFn& UtilityFn::left() const { return node_->left; }
const UtilityFn& UtilityFn::right() const { return node_->right; }
const SplitterConfig& UtilityFn::splitter() const { return node_->cfg; }

std::string UtilityFn::to_string() const {
    if (!node_) return "<empty>";
    const UtilityNode& n = *node_;
    switch (n.kind) {
    case Kind::crra:
        return fmt::format("crra(a={}, nu={}, g={})", n.a, n.nu.to_string(), n.g.to_string());
    case Kind::scaled:
        return fmt::format("{}*{}", n.k, n.left.to_string());
    case Kind::sum:
        return fmt::format("({} + {})", n.left.to_string(), n.right.to_string());
    case Kind::sup_convolution:
        return fmt::format("({} [+]c {})", n.left.to_string(), n.right.to_string());
    }
    return {};
}

bool UtilityFn::operator==(const UtilityFn& other) const {
    if (node_ == other.node_) return true;
    if (!node_ || !other.node_) return false;
    const UtilityNode& a = *node_;
    const UtilityNode& b = *other.node_;
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case Kind::crra:
        return a.a == b.a && a.nu == b.nu && a.g == b.g;
    case Kind::scaled:
        return a.k == b.k && a.left == b.left;
    case Kind::sum:
        return a.left == b.left && a.right == b.right;
    case Kind::sup_convolution:
        return a.left == b.left && a.right == b.right && a.cfg == b.cfg;
    }
    return false;
}

// ------------------------------------------------------------- aggregation

AggregateUtility::AggregateUtility(std::vector<UtilityFn> components, const WeightVector& w,
                                   const SplitterConfig& cfg)
    : components_(std::move(components)), w_(w), cfg_(cfg) {
    if (components_.empty()) throw ConfigError("aggregate needs at least one component");
    if (w_.size() != components_.size())
        throw ConfigError(fmt::format("{} weights for {} utilities", w_.size(), components_.size()));
    for (std::size_t m = 0; m < components_.size(); ++m) {
        if (components_[m].empty()) throw ConfigError(fmt::format("utility of agent {} is empty", m));
        if (w_[m] > 0.0) active_.push_back(m);
    }
    if (active_.empty()) throw ConfigError("all weights are zero");

    if (active_.size() == 1 && w_[active_[0]] == 1.0) {
        scaled_.push_back(components_[active_[0]]);
    } else {
        for (std::size_t m : active_) scaled_.push_back(scale(w_[m], components_[m]));
    }
    folds_.push_back(scaled_[0]);
    for (std::size_t i = 1; i < scaled_.size(); ++i) folds_.push_back(sup_convolve(folds_.back(), scaled_[i], cfg_));

    if (scaled_.size() > 1) {
        for (const auto& u : scaled_) {
            std::vector<double> k;
            const UtilityFn& base = peel(u, k);
            if (base.kind() != UtilityFn::Kind::crra) {
                leaves_.clear();
                break;
            }
            double log_w = 0.0;
            for (double f : k) log_w += std::log(f);
            leaves_.push_back({log_w, base.crra_a(), base.crra_nu(), base.crra_g()});
        }
    }
}

void AggregateUtility::allocate_into(double t, double total, State x, std::span<double> out) const {
    require_positive_consumption(total);
    std::fill(out.begin(), out.end(), 0.0);
    double rest = total;
    if (!leaves_.empty()) {
        // ln c_m = (kappa_m - l) / a_m; G(l) = ln sum_m c_m - ln total is
        // convex and decreasing, so Newton from the left never overshoots.
        const std::size_t n = leaves_.size();
        double kappa[16];
        std::vector<double> kappa_heap;
        double* kp = kappa;
        if (n > 16) {
            kappa_heap.resize(n);
            kp = kappa_heap.data();
        }
        const double log_total = std::log(total);
        double l = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const Leaf& f = leaves_[i];
            kp[i] = f.log_w + f.nu(t, x) + std::log(crra_state_factor_value(f.g(t, x), x));
            l = std::min(l, kp[i] - f.a * log_total);
        }
        for (int it = 0; it < 200; ++it) {
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) m = std::max(m, (kp[i] - l) / leaves_[i].a);
            double sum = 0.0, slope = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp((kp[i] - l) / leaves_[i].a - m);
                sum += e;
                slope += e / leaves_[i].a;
            }
            const double G = m + std::log(sum) - log_total;
            const double step = G / (slope / sum);
            l += step;
            if (!(std::abs(step) > 1e-15 * std::max(1.0, std::abs(l)))) break;
        }
        for (std::size_t i = n; i-- > 1;) {
            double tail = std::exp((kp[i] - l) / leaves_[i].a);
            double head = rest - tail;
            if (!(head > 0.0) || !(tail > 0.0)) {
                fold_allocate(t, total, x, out);
                return;
            }
            exact_parts(rest, head, tail);
            out[active_[i]] = tail;
            rest = head;
        }
        out[active_[0]] = rest;
        return;
    }
    fold_allocate(t, total, x, out);
}

void AggregateUtility::fold_allocate(double t, double total, State x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    double rest = total;
    for (std::size_t i = scaled_.size(); i-- > 1;) {
        const auto [head, tail] = split(folds_[i - 1], scaled_[i], t, rest, x, cfg_);
        out[active_[i]] = tail;
        rest = head;
    }
    out[active_[0]] = rest;
}

double AggregateUtility::log_marginal_from_allocation(double t, std::span<const double> alloc, State x) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < active_.size(); ++i)
        if (alloc[active_[i]] > alloc[active_[best]]) best = i;
    return scaled_[best].log_u_c(t, alloc[active_[best]], x);
}

std::vector<double> AggregateUtility::allocate(double t, double total, State x) const {
    std::vector<double> out(components_.size());
    allocate_into(t, total, x, out);
    return out;
}

AggregateUtility aggregate(std::vector<UtilityFn> components, const WeightVector& w, const SplitterConfig& cfg) {
    return AggregateUtility(std::move(components), w, cfg);
}

// -------------------------------------------------------------- diagnostics

std::vector<UtilityProbe> default_probes(const std::vector<std::vector<double>>& states, double delta) {
    std::vector<UtilityProbe> probes;
    const double ts[] = {delta, 0.25, 0.5, 0.75, 1.0 - delta};
    const double cs[] = {1e-4, 1e-2, 1.0 - delta, 1.0, 1.0 + delta, 1e2, 1e4};
    for (const auto& x : states)
        for (double t : ts)
            for (double c : cs) probes.push_back({t, c, x});
    return probes;
}

ConeDiagnostics cone_diagnostics(const UtilityFn& u, std::span<const UtilityProbe> probes, double bound,
                                 double inada_low, double inada_high) {
    ConeDiagnostics rep;
    rep.bound = bound;
    rep.min_risk_aversion = std::numeric_limits<double>::infinity();
    for (const auto& p : probes) {
        ++rep.probes;
        const double uc = u.u_c(p.t, p.c, p.x);
        const double ucc = u.u_cc(p.t, p.c, p.x);
        if (!(uc > 0.0) || !(ucc < 0.0)) {
            if (rep.monotone_concave)
                rep.notes.push_back(fmt::format("u_c={} u_cc={} at t={} c={}", uc, ucc, p.t, p.c));
            rep.monotone_concave = false;
        }
        const double ra = u.risk_aversion(p.t, p.c, p.x);
        double sens = 0.0;
        for (std::size_t i = 0; i < p.x.size(); ++i) sens += std::abs(u.u_cx_over_u_c(i, p.t, p.c, p.x));
        rep.min_risk_aversion = std::min(rep.min_risk_aversion, ra);
        rep.max_risk_aversion = std::max(rep.max_risk_aversion, ra);
        rep.max_state_sensitivity = std::max(rep.max_state_sensitivity, sens);
        rep.max_cone_statistic = std::max(rep.max_cone_statistic, ra + sens);
        rep.max_time_sensitivity = std::max(rep.max_time_sensitivity, std::abs(u.u_ct_over_u_c(p.t, p.c, p.x)));
        rep.max_inverse_risk_aversion = std::max(rep.max_inverse_risk_aversion, 1.0 / ra);

        double xnorm = 0.0;
        for (double v : p.x) xnorm += v * v;
        const double val = std::abs(u.u(p.t, p.c, p.x));
        if (val > 0.0) {
            const double ratio = std::log(val) / (1.0 + std::sqrt(xnorm) + std::abs(std::log(p.c)));
            if (std::isfinite(ratio)) rep.max_growth_ratio = std::max(rep.max_growth_ratio, ratio);
        }

        const double lo = u.log_u_c(p.t, inada_low, p.x);
        const double mid = u.log_u_c(p.t, 1.0, p.x);
        const double hi = u.log_u_c(p.t, inada_high, p.x);
        if (!(lo > mid && mid > hi)) {
            if (rep.inada) rep.notes.push_back(fmt::format("marginal not decreasing across probes at t={}", p.t));
            rep.inada = false;
        }
    }
    if (rep.probes == 0) rep.min_risk_aversion = 0.0;
    rep.within_bound = rep.max_cone_statistic <= bound;
    if (!rep.within_bound)
        rep.notes.push_back(fmt::format("cone statistic {} exceeds N = {}", rep.max_cone_statistic, bound));
    return rep;
}

} // namespace radner
