#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace radner {

using State = std::span<const double>;

// A scalar field f(t, x) drawn from a small closed catalog so that every
// scenario function is serializable. All entries carry analytic partial
// derivatives in t and in each state axis.
//
//   constant      k
//   affine        a + b * x[axis]
//   exp_affine    exp(a + b * x[axis])
//   polynomial    sum_i sum_k coeffs[i][k] * x[i]^k   (degree <= 4 per axis)
//   time_poly     sum_k coeffs[k] * t^k
//   product       f1 * f2 * ...
//   sum           f1 + f2 + ...
class Expr {
public:
    enum class Kind { constant, affine, exp_affine, polynomial, time_poly, product, sum };

    static constexpr std::size_t max_poly_degree = 4;

    Expr() : Expr(constant(0.0)) {}

    static Expr constant(double k);
    static Expr affine(double a, double b, std::size_t axis);
    static Expr exp_affine(double a, double b, std::size_t axis);
    static Expr polynomial(std::vector<std::vector<double>> coeffs);
    static Expr time_poly(std::vector<double> coeffs);
    static Expr product(std::vector<Expr> factors);
    static Expr sum(std::vector<Expr> terms);

    double operator()(double t, State x) const;
    double d_dt(double t, State x) const;
    double d_dx(std::size_t axis, double t, State x) const;

    // One past the highest state axis referenced; 0 for state-free fields.
    std::size_t arity() const;
    bool depends_on_time() const;

    Kind kind() const { return kind_; }
    double a() const { return a_; }
    double b() const { return b_; }
    std::size_t axis() const { return axis_; }
    const std::vector<std::vector<double>>& coeffs() const { return coeffs_; }
    const std::vector<Expr>& children() const { return children_; }

    std::string to_string() const;

    bool operator==(const Expr& other) const;

private:
    Expr(Kind kind) : kind_(kind) {}

    Kind kind_;
    double a_ = 0.0;
    double b_ = 0.0;
    std::size_t axis_ = 0;
    std::vector<std::vector<double>> coeffs_;
    std::vector<Expr> children_;
};

const char* kind_name(Expr::Kind kind);

} // namespace radner
