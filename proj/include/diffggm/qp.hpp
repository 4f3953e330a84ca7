#pragma once

#include <memory>

#include "diffggm/core.hpp"

namespace diffggm {

/// minimize 1/2 x^T Q x  subject to  lower <= A x <= upper.
/// Infinite bounds are allowed on either side.
struct BoxConstrainedQp {
  Matrix Q;
  Matrix A;
  Vector lower;
  Vector upper;

  /// Throws DimensionMismatch, NonPsdCost or InvalidArgument.
  void validate() const;
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

const char* to_string(QpStatus status);

struct QpSolution {
  Vector x;
  Vector dual;  // multipliers on A x; negative at active lower bounds, positive at active upper bounds
  double objective = 0.0;
  double primal_infeasibility = 0.0;  // max bound violation of A x
  QpStatus status = QpStatus::MaxIter;
  int iterations = 0;
  bool polished = false;
};

/// Largest bound violation of an Optimal solution.
inline constexpr double kQpFeasTol = 1e-7;

/**
 * Operator-splitting (ADMM) solver for a fixed (Q, A) pair.
 *
 * Construction equilibrates the problem and factors the linear system for the
 * initial penalty; solve() can then be called for many bound vectors. The
 * object is immutable after construction and solve() is reentrant.
 */
class PreparedQp {
 public:
  PreparedQp(Matrix Q, Matrix A, const SolverConfig& cfg);
  ~PreparedQp();
  PreparedQp(PreparedQp&&) noexcept;
  PreparedQp& operator=(PreparedQp&&) noexcept;

  QpSolution solve(const Vector& lower, const Vector& upper) const;

  Index num_variables() const;
  Index num_constraints() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

QpSolution solve_qp(const BoxConstrainedQp& prob, const SolverConfig& cfg);

/// Largest complementary-slackness violation of (x, dual) for the given bounds:
/// for each row, |dual| times the distance of A x from the bound the sign of dual selects,
/// or |dual| alone when that bound is infinite.
double complementary_slackness(const Matrix& A, const Vector& lower, const Vector& upper,
                               const Vector& x, const Vector& dual);

}  // namespace diffggm
