#pragma once

#include "radner/expression.hpp"
#include "radner/weights.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace radner {

struct SplitterConfig {
    double tolerance = 1e-13;   // on |ln u1_c(c1) - ln u2_c(c2)|
    int max_iterations = 200;
    double epsilon = 1e-12;     // initial bracket [eps*c, (1-eps)*c]

    bool operator==(const SplitterConfig&) const = default;
};

namespace detail {
struct UtilityNode;
}

// Utility u(t, c, x) for c > 0 built from CRRA leaves with scaling, pointwise
// sums, and sup-convolution. Marginals are exposed in log / ratio form so
// that extreme consumption levels do not overflow:
//
//   log_u_c        ln u_c
//   tolerance      -u_c / u_cc  (absolute risk tolerance, > 0)
//   u_ct_over_u_c  u_ct / u_c
//   u_cx_over_u_c  u_cx^i / u_c
//
// Values are immutable and cheap to copy.
class UtilityFn {
public:
    enum class Kind { crra, scaled, sum, sup_convolution };

    UtilityFn() = default;

    // e^{nu(t)} g(x) (c^{1-a} - 1) / (1 - a), and e^{nu(t)} g(x) ln c at a = 1.
    static UtilityFn crra(double a, Expr nu = Expr::constant(0.0), Expr g = Expr::constant(1.0));
    static UtilityFn log() { return crra(1.0); }

    double u(double t, double c, State x) const;
    double u_c(double t, double c, State x) const;
    double u_cc(double t, double c, State x) const;
    double u_ct(double t, double c, State x) const;
    double u_cx(std::size_t axis, double t, double c, State x) const;

    double log_u_c(double t, double c, State x) const;
    double tolerance(double t, double c, State x) const;
    double u_ct_over_u_c(double t, double c, State x) const;
    double u_cx_over_u_c(std::size_t axis, double t, double c, State x) const;
    double risk_aversion(double t, double c, State x) const { return c / tolerance(t, c, x); }

    Kind kind() const;
    bool empty() const { return !node_; }

    // Accessors for serialization.
    double crra_a() const;
    const Expr& crra_nu() const;
    const Expr& crra_g() const;
    double scale_factor() const;
    const UtilityFn& left() const;   // scaled: the inner utility
    const UtilityFn& right() const;
    const SplitterConfig& splitter() const;

    std::string to_string() const;
    bool operator==(const UtilityFn& other) const;

private:
    explicit UtilityFn(std::shared_ptr<const detail::UtilityNode> node) : node_(std::move(node)) {}
    std::shared_ptr<const detail::UtilityNode> node_;

    friend UtilityFn scale(double k, const UtilityFn& u);
    friend UtilityFn add(const UtilityFn& u1, const UtilityFn& u2);
    friend UtilityFn sup_convolve(const UtilityFn& u1, const UtilityFn& u2, const SplitterConfig& cfg);
};

// k * u for k > 0. Nested scalings are kept as separate factors.
UtilityFn scale(double k, const UtilityFn& u);
// Pointwise u1(c) + u2(c).
UtilityFn add(const UtilityFn& u1, const UtilityFn& u2);
// (u1 (+)_c u2)(t, c, x) = sup over c1 + c2 = c of u1(c1) + u2(c2).
UtilityFn sup_convolve(const UtilityFn& u1, const UtilityFn& u2, const SplitterConfig& cfg = {});

// Optimal split of c between u1 and u2. c1 + c2 == c in floating point and
// u1_c(c1) = u2_c(c2) to cfg.tolerance in log terms. Scale factors common
// to both sides cancel exactly.
std::pair<double, double> split(const UtilityFn& u1, const UtilityFn& u2, double t, double c, State x,
                                const SplitterConfig& cfg = {});

// Sup-convolution of the w-scaled components, folded left in agent order
// with zero-weight agents dropped.
class AggregateUtility {
public:
    AggregateUtility() = default;
    AggregateUtility(std::vector<UtilityFn> components, const WeightVector& w, const SplitterConfig& cfg = {});

    const UtilityFn& utility() const { return folds_.back(); }
    const WeightVector& weights() const { return w_; }
    std::size_t size() const { return components_.size(); }
    const std::vector<std::size_t>& active() const { return active_; }

    // Pareto allocation of total: per-agent consumption (zero for dropped
    // agents) whose left-fold sum equals total exactly.
    std::vector<double> allocate(double t, double total, State x) const;
    void allocate_into(double t, double total, State x, std::span<double> out) const;

    // ln u_c(t, total; w) recovered from an allocation of total, without
    // splitting again: w^m u^m_c(c^m) for the agent with the largest share.
    double log_marginal_from_allocation(double t, std::span<const double> alloc, State x) const;

private:
    void fold_allocate(double t, double total, State x, std::span<double> out) const;

    std::vector<UtilityFn> components_;
    WeightVector w_;
    SplitterConfig cfg_;
    std::vector<std::size_t> active_;
    std::vector<UtilityFn> scaled_;  // w^m u^m for active agents
    std::vector<UtilityFn> folds_;   // folds_[i] aggregates scaled_[0..i]

    // When every active component is a scaled CRRA leaf the allocation is
    // found from one equation in the common log-marginal instead of nested
    // splits.
    struct Leaf {
        double log_w = 0.0;
        double a = 1.0;
        Expr nu;
        Expr g;
    };
    std::vector<Leaf> leaves_;
};

AggregateUtility aggregate(std::vector<UtilityFn> components, const WeightVector& w,
                           const SplitterConfig& cfg = {});

struct UtilityProbe {
    double t = 0.0;
    double c = 1.0;
    std::vector<double> x;
};

struct ConeDiagnostics {
    std::size_t probes = 0;
    double bound = 0.0;                   // configured N
    double min_risk_aversion = 0.0;       // -c u_cc / u_c
    double max_risk_aversion = 0.0;
    double max_state_sensitivity = 0.0;   // sum_i |u_cx^i| / u_c
    double max_cone_statistic = 0.0;      // risk aversion + state sensitivity
    double max_growth_ratio = 0.0;        // ln|u(t, e^y, x)| / (1 + |x| + |y|)
    double max_time_sensitivity = 0.0;    // |u_ct| / u_c
    double max_inverse_risk_aversion = 0.0;  // |u_c / (c u_cc)|
    bool within_bound = true;
    bool monotone_concave = true;         // u_c > 0 and u_cc < 0 at every probe
    bool inada = true;                    // u_c(c_low) > u_c(1) > u_c(c_high) at every probe (t, x)
    std::vector<std::string> notes;
};

// Probes over t in [delta, 1 - delta], c in [1 - delta, 1 + delta] plus a
// log-spaced c sweep, at the given states.
std::vector<UtilityProbe> default_probes(const std::vector<std::vector<double>>& states, double delta = 0.05);

ConeDiagnostics cone_diagnostics(const UtilityFn& u, std::span<const UtilityProbe> probes, double bound,
                                 double inada_low = 1e-8, double inada_high = 1e8);

} // namespace radner
