#pragma once

#include <vector>

#include "diffggm/core.hpp"

namespace diffggm {

/// Solution of min (1/2n)||y - X beta||^2 + lambda ||beta||_1.
struct LassoFit {
  Vector beta;
  Vector k_hat;  // X^T (y - X beta) / n, the subgradient of lambda ||beta||_1 at the optimum
  double lambda = 0.0;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;  // objective after each sweep
};

/// Cyclic coordinate descent with soft-thresholding. A fit that stops at
/// max_iter is returned with converged == false and its diagnostics intact.
LassoFit solve_lasso(const SampleMatrix& X, const Vector& y, double lambda, const SolverConfig& cfg);

/// Same solver on covariance-form data; `warm` seeds the coefficients.
LassoFit solve_lasso_gram(const GramProblem& prob, double lambda, const SolverConfig& cfg,
                          const Vector* warm = nullptr);

/// X^T (y - X beta) / n.
Vector subgradient(const SampleMatrix& X, const Vector& y, const Vector& beta);

/// Largest violation of the lasso optimality conditions given k_hat.
double lasso_kkt_residual(const Vector& beta, const Vector& k_hat, double lambda);

/// (1/2n)||y - X beta||^2 + lambda ||beta||_1 evaluated from covariance form.
double lasso_objective(const GramProblem& prob, const Vector& beta, double lambda);

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace diffggm
