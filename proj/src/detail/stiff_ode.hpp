#pragma once

// Adaptive implicit integration of small stiff autonomous systems. Kept in its
// own translation unit because the linear-algebra backend of the stepper does
// not build under C++20.

#include <array>
#include <functional>

namespace pegamm::detail {

constexpr std::size_t kStiffDim = 12;
using StiffState = std::array<double, kStiffDim>;
using StiffJacobian = std::array<std::array<double, kStiffDim>, kStiffDim>;  // [row][col]

struct StiffSystem {
  std::function<void(const StiffState& x, StiffState& dx)> rhs;
  std::function<void(const StiffState& x, StiffJacobian& jac)> jacobian;
  /// Called after every accepted step; returning false stops the integration.
  std::function<bool(const StiffState& x, double t)> keep_going;
};

enum class StiffStatus { done, stopped, step_collapse };

/// Advances x from t0 to t1 with an error-controlled 4th-order Rosenbrock
/// method (absolute/relative tolerances abs_tol, rel_tol). `dt` is the initial
/// step on entry and the last accepted step size on exit, so consecutive calls
/// continue smoothly. On `stopped`, x holds the state at the stopping time.
StiffStatus integrate_stiff(const StiffSystem& sys, StiffState& x, double t0, double t1, double& dt,
                     double abs_tol, double rel_tol);

}  // namespace pegamm::detail
