#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agentpomdp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a precondition (index out of range, wrong dimensions).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Input data is well-formed but violates a model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An enumeration or table would exceed its configured cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Bayes update conditioned on an observation of probability zero.
class ImpossibleObservationError : public Error {
public:
    using Error::Error;
};

/// More than one closed class is reachable, so the limit is not unique.
class AmbiguityError : public Error {
public:
    using Error::Error;
};

/// A (z, a) cell has zero stationary mass where a conditional is required.
class ZeroVisitError : public Error {
public:
    using Error::Error;
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : ValidationError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                          ": " + what),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class UnsupportedFeatureError : public ValidationError {
public:
    explicit UnsupportedFeatureError(const std::string& construct)
        : ValidationError("unsupported construct: " + construct), construct_(construct) {}

    const std::string& construct() const noexcept { return construct_; }

private:
    std::string construct_;
};

}  // namespace agentpomdp
