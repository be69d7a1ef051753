#include "radner/expression.hpp"

#include "radner/error.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace radner {

namespace {

// Horner evaluation of sum_k c[k] z^k and of its derivative.
double horner(const std::vector<double>& c, double z) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
    return acc;
}

double horner_derivative(const std::vector<double>& c, double z) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 1;) acc = acc * z + static_cast<double>(k) * c[k];
    return acc;
}

double coordinate(State x, std::size_t axis) {
    if (axis >= x.size()) {
        throw EvaluationError(fmt::format("expression references axis {} but state has dimension {}",
                                          axis, x.size()));
    }
    return x[axis];
}

} // namespace

Expr Expr::constant(double k) {
    Expr e(Kind::constant);
    e.a_ = k;
    return e;
}

Expr Expr::affine(double a, double b, std::size_t axis) {
    Expr e(Kind::affine);
    e.a_ = a;
    e.b_ = b;
    e.axis_ = axis;
    return e;
}

Expr Expr::exp_affine(double a, double b, std::size_t axis) {
    Expr e(Kind::exp_affine);
    e.a_ = a;
    e.b_ = b;
    e.axis_ = axis;
    return e;
}

Expr Expr::polynomial(std::vector<std::vector<double>> coeffs) {
    if (coeffs.empty()) throw ConfigError("polynomial needs at least one axis of coefficients");
    for (const auto& row : coeffs) {
        if (row.size() > max_poly_degree + 1) {
            throw ConfigError(fmt::format("polynomial degree {} exceeds the catalog limit {}",
                                          row.size() - 1, max_poly_degree));
        }
    }
    Expr e(Kind::polynomial);
    e.coeffs_ = std::move(coeffs);
    return e;
}

Expr Expr::time_poly(std::vector<double> coeffs) {
    if (coeffs.empty()) throw ConfigError("time_poly needs at least one coefficient");
    Expr e(Kind::time_poly);
    e.coeffs_.push_back(std::move(coeffs));
    return e;
}

Expr Expr::product(std::vector<Expr> factors) {
    if (factors.empty()) throw ConfigError("product needs at least one factor");
    Expr e(Kind::product);
    e.children_ = std::move(factors);
    return e;
}

Expr Expr::sum(std::vector<Expr> terms) {
    if (terms.empty()) throw ConfigError("sum needs at least one term");
    Expr e(Kind::sum);
    e.children_ = std::move(terms);
    return e;
}

double Expr::operator()(double t, State x) const {
    switch (kind_) {
    case Kind::constant:
        return a_;
    case Kind::affine:
        return a_ + b_ * coordinate(x, axis_);
    case Kind::exp_affine:
        return std::exp(a_ + b_ * coordinate(x, axis_));
    case Kind::polynomial: {
        double acc = 0.0;
        for (std::size_t i = 0; i < coeffs_.size(); ++i) acc += horner(coeffs_[i], coordinate(x, i));
        return acc;
    }
    case Kind::time_poly:
        return horner(coeffs_.front(), t);
    case Kind::product: {
        double acc = 1.0;
        for (const auto& f : children_) acc *= f(t, x);
        return acc;
    }
    case Kind::sum: {
        double acc = 0.0;
        for (const auto& f : children_) acc += f(t, x);
        return acc;
    }
    }
    return 0.0;
}

double Expr::d_dt(double t, State x) const {
    switch (kind_) {
    case Kind::constant:
    case Kind::affine:
    case Kind::exp_affine:
    case Kind::polynomial:
        return 0.0;
    case Kind::time_poly:
        return horner_derivative(coeffs_.front(), t);
    case Kind::product: {
        double acc = 0.0;
        for (std::size_t i = 0; i < children_.size(); ++i) {
            double term = children_[i].d_dt(t, x);
            if (term == 0.0) continue;
            for (std::size_t j = 0; j < children_.size(); ++j)
                if (j != i) term *= children_[j](t, x);
            acc += term;
        }
        return acc;
    }
    case Kind::sum: {
        double acc = 0.0;
        for (const auto& f : children_) acc += f.d_dt(t, x);
        return acc;
    }
    }
    return 0.0;
}

double Expr::d_dx(std::size_t axis, double t, State x) const {
    switch (kind_) {
    case Kind::constant:
    case Kind::time_poly:
        return 0.0;
    case Kind::affine:
        return axis == axis_ ? b_ : 0.0;
    case Kind::exp_affine:
        return axis == axis_ ? b_ * std::exp(a_ + b_ * coordinate(x, axis_)) : 0.0;
    case Kind::polynomial:
        return axis < coeffs_.size() ? horner_derivative(coeffs_[axis], coordinate(x, axis)) : 0.0;
    case Kind::product: {
        double acc = 0.0;
        for (std::size_t i = 0; i < children_.size(); ++i) {
            double term = children_[i].d_dx(axis, t, x);
            if (term == 0.0) continue;
            for (std::size_t j = 0; j < children_.size(); ++j)
                if (j != i) term *= children_[j](t, x);
            acc += term;
        }
        return acc;
    }
    case Kind::sum: {
        double acc = 0.0;
        for (const auto& f : children_) acc += f.d_dx(axis, t, x);
        return acc;
    }
    }
    return 0.0;
}

std::size_t Expr::arity() const {
    switch (kind_) {
    case Kind::constant:
    case Kind::time_poly:
        return 0;
    case Kind::affine:
    case Kind::exp_affine:
        return axis_ + 1;
    case Kind::polynomial:
        return coeffs_.size();
    case Kind::product:
    case Kind::sum: {
        std::size_t n = 0;
        for (const auto& f : children_) n = std::max(n, f.arity());
        return n;
    }
    }
    return 0;
}

bool Expr::depends_on_time() const {
    if (kind_ == Kind::time_poly) return coeffs_.front().size() > 1;
    for (const auto& f : children_)
        if (f.depends_on_time()) return true;
    return false;
}

std::string Expr::to_string() const {
    switch (kind_) {
    case Kind::constant:
        return fmt::format("{}", a_);
    case Kind::affine:
        return fmt::format("({} + {}*x{})", a_, b_, axis_);
    case Kind::exp_affine:
        return fmt::format("exp({} + {}*x{})", a_, b_, axis_);
    case Kind::polynomial: {
        std::string s = "poly[";
        for (std::size_t i = 0; i < coeffs_.size(); ++i)
            s += fmt::format("{}x{}:{}", i ? " " : "", i, fmt::join(coeffs_[i], ","));
        return s + "]";
    }
    case Kind::time_poly:
        return fmt::format("tpoly[{}]", fmt::join(coeffs_.front(), ","));
    case Kind::product:
    case Kind::sum: {
        std::string s;
        for (std::size_t i = 0; i < children_.size(); ++i) {
            if (i) s += kind_ == Kind::product ? " * " : " + ";
            s += children_[i].to_string();
        }
        return "(" + s + ")";
    }
    }
    return {};
}

bool Expr::operator==(const Expr& other) const {
    return kind_ == other.kind_ && a_ == other.a_ && b_ == other.b_ && axis_ == other.axis_ &&
           coeffs_ == other.coeffs_ && children_ == other.children_;
}

const char* kind_name(Expr::Kind kind) {
    switch (kind) {
    case Expr::Kind::constant: return "const";
    case Expr::Kind::affine: return "affine";
    case Expr::Kind::exp_affine: return "exp_affine";
    case Expr::Kind::polynomial: return "poly";
    case Expr::Kind::time_poly: return "time_poly";
    case Expr::Kind::product: return "product";
    case Expr::Kind::sum: return "sum";
    }
    return "?";
}

} // namespace radner
