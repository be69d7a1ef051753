#pragma once

#include <stdexcept>
#include <string>

namespace radner {

// Base of every error raised by the library. Each subclass names the
// stage that failed so the CLI can map it to a nonzero exit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad configuration or call arguments (sizes, counts, empty weights).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A coefficient, utility, or marginal produced a non-finite or
// out-of-domain value at a sampled location.
class EvaluationError : public Error {
public:
    using Error::Error;
};

// The sup-convolution splitter could not bracket the first-order
// condition; in practice this means an Inada condition is violated.
class SplitterError : public Error {
public:
    using Error::Error;
};

// Nonpositive notional, income, or endowment along a path.
class PrimitiveError : public Error {
public:
    using Error::Error;
};

// Finite-difference scheme failure (instability, positivity loss).
class SolverError : public Error {
public:
    using Error::Error;
};

// Rank-deficient dispersion matrix where a full-rank one is required.
class CompletenessError : public Error {
public:
    using Error::Error;
};

// Weight iterate pushed onto the boundary of the simplex.
class BoundaryError : public Error {
public:
    using Error::Error;
};

} // namespace radner
