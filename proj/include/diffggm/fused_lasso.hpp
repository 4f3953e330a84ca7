#pragma once

#include <vector>

#include "diffggm/core.hpp"

namespace diffggm {

/**
 * Joint solution of the two-task fused problem
 *
 *   (1/2n1)||y1 - X1 b1||^2 + (1/2n2)||y2 - X2 b2||^2
 *     + lambda1 (||b1||_1 + ||b2||_1) + lambda2 ||b1 - b2||_1
 *
 * k1 and k2 are the per-task residual correlations X_j^T (y_j - X_j b_j) / n_j.
 */
struct FusedFit {
  Vector beta1, beta2;
  Vector k1, k2;
  RegularizationParams params;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;
};

FusedFit solve_fused(const SampleMatrix& X1, const Vector& y1, const SampleMatrix& X2, const Vector& y2,
                     const RegularizationParams& params, const SolverConfig& cfg);

FusedFit solve_fused_gram(const GramProblem& task1, const GramProblem& task2, double lambda1,
                          double lambda2, const SolverConfig& cfg, const Vector* warm1 = nullptr,
                          const Vector* warm2 = nullptr);

/// Exact minimizer of
///   a/2 x^2 - z1 x + b/2 y^2 - z2 y + l1 |x| + l1 |y| + l2 |x - y|
/// for a, b > 0.
struct PairSolution {
  double x = 0.0;
  double y = 0.0;
};
PairSolution solve_fused_pair(double a, double z1, double b, double z2, double l1, double l2);

/// Largest violation of the fused optimality conditions. Coordinates with
/// |b1 - b2| below 1e-12 are treated as fused.
double fused_kkt_residual(const Vector& beta1, const Vector& beta2, const Vector& k1, const Vector& k2,
                          double lambda1, double lambda2);

double fused_objective(const GramProblem& task1, const GramProblem& task2, const Vector& beta1,
                       const Vector& beta2, double lambda1, double lambda2);

}  // namespace diffggm
