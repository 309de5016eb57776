#pragma once

#include <stdexcept>
#include <string>

namespace simsrc {

/// Violated precondition: bad dimensions, out-of-range parameters, wrong
/// variance representation for an estimator, stale caches.
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Non-positive conductivity handed to the forward model.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Non-finite values or loss of positive definiteness inside an iterative solver.
class NumericalBreakdown : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericalBreakdown {
public:
  SingularMatrixError(const std::string& what, std::size_t pivot_row, double pivot_value)
      : NumericalBreakdown(what), pivot_row_(pivot_row), pivot_value_(pivot_value) {}

  std::size_t pivot_row() const noexcept { return pivot_row_; }
  double pivot_value() const noexcept { return pivot_value_; }

private:
  std::size_t pivot_row_;
  double pivot_value_;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace simsrc
