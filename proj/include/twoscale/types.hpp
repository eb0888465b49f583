#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace twoscale {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

using Index = std::ptrdiff_t;
using NodalVector = Eigen::VectorXd;

/// Raised when an input violates a documented precondition of the method
/// (non-positive definite matrix, boundary face where an interior one is
/// required, unsupported dimension, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the linear solver or the LP when the numerical procedure itself
/// breaks down.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw DomainError(message);
}

template <int Dim>
constexpr void static_check_dim() {
  static_assert(Dim == 1 || Dim == 2, "twoscale supports d = 1 and d = 2 only");
}

}  // namespace twoscale
