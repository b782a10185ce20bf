#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace regmdp {

using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-stochastic tolerance used by every validity check on policies and kernels.
inline constexpr Scalar kStochasticTol = 1e-12;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Invalid argument supplied by the caller (bad size, non-positive step, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A point outside the effective domain of a regularizer or off the simplex.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The constraint set of a regularized subproblem is empty.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loaded object violates a model invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents; the message carries line/field diagnostics.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method hit its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Scalar residual)
      : std::runtime_error(what), residual_(residual) {}
  Scalar residual() const noexcept { return residual_; }

 private:
  Scalar residual_;
};

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// Row-stochastic |S|x|A| table; row s is pi(.|s).
struct Policy {
  Matrix probs;

  Policy() = default;
  explicit Policy(Matrix p) : probs(std::move(p)) {}

  Index n_states() const { return probs.rows(); }
  Index n_actions() const { return probs.cols(); }
  auto row(Index s) const { return probs.row(s); }

  static Policy uniform(Index n_states, Index n_actions) {
    return Policy(Matrix::Constant(n_states, n_actions, Scalar(1) / Scalar(n_actions)));
  }

  /// Throws ValidationError unless every row is nonnegative and sums to one.
  void validate() const;
};

struct ValueTable {
  Vector v;
};

struct QTable {
  Matrix q;
};

/// Surrogate subgradient iterate; row s equals a subgradient of h_s at the
/// current policy up to an unmaterialised constant shift.
struct DualTable {
  Matrix xi;
};

}  // namespace regmdp
