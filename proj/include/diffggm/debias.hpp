#pragma once

#include <utility>

#include "diffggm/core.hpp"
#include "diffggm/fused_lasso.hpp"
#include "diffggm/lasso.hpp"

namespace diffggm {

/// Row-wise approximate inverses used for debiasing. M2 is empty for a
/// single-task estimate. mu1/mu2 are the budgets actually enforced, after any
/// relaxation.
struct DebiasMatrices {
  Matrix M1;
  Matrix M2;
  double mu1 = 0.0;
  double mu2 = 0.0;
  bool feasible = false;
  int relaxations = 0;

  bool joint() const noexcept { return M2.size() > 0; }
};

/// Factor applied to both budgets each time a row program is infeasible.
inline constexpr double kBudgetRelaxation = 1.5;

/// Sparsity and rate assumptions entering the joint bias budgets.
struct BiasBoundsConfig {
  double c = 2.0;
  double a = 2.0;
  int s_d = 2;
  int s_12 = 15;
  double m = 0.01;

  void validate() const;
};

/// mu1 = 1 / (c lambda2 s_d n2^m),  mu2 = 1 / (a (lambda1 s_12 + lambda2 s_d) n2^m).
std::pair<double, double> bias_bounds(double lambda1, double lambda2, int s_d, int s_12, Index n2,
                                      double c, double a, double m);
std::pair<double, double> bias_bounds(double lambda1, double lambda2, Index n2, const BiasBoundsConfig& cfg);

/// Default single-task budget 2 sqrt(log p / n).
double default_single_budget(Index p, Index n);

/// Each row m_i minimizes m^T Sigma m subject to ||Sigma m - e_i||_inf <= mu.
DebiasMatrices estimate_m_single(const Matrix& sigma, double mu, const SolverConfig& cfg);
DebiasMatrices estimate_m_single(const EmpiricalCovariance& sigma, double mu, const SolverConfig& cfg);

/// Each row pair minimizes (1/n1) m1^T S1 m1 + (1/n2) m2^T S2 m2 subject to
/// |S1 m1 + S2 m2 - 2 e_i|_inf <= mu1 and |S1 m1 - S2 m2|_inf <= mu2.
DebiasMatrices estimate_m_joint(const Matrix& sigma1, const Matrix& sigma2, Index n1, Index n2, double mu1,
                                double mu2, const SolverConfig& cfg);
DebiasMatrices estimate_m_joint(const EmpiricalCovariance& sigma1, const EmpiricalCovariance& sigma2,
                                double mu1, double mu2, const SolverConfig& cfg);

/// max_ij |(M Sigma - I)_ij|, recomputed directly.
double single_constraint_norm(const Matrix& M, const Matrix& sigma);
/// (||M1 S1 + M2 S2 - 2I||_max, ||M1 S1 - M2 S2||_max), recomputed directly.
std::pair<double, double> joint_constraint_norms(const DebiasMatrices& M, const Matrix& sigma1,
                                                 const Matrix& sigma2);
/// True when the recomputed constraint norms respect the recorded budgets (relative slack 1e-6).
bool verify_constraints(const DebiasMatrices& M, const Matrix& sigma1, const Matrix& sigma2 = Matrix());

/// beta + M X^T (y - X beta) / n.
Vector debias_single(const LassoFit& fit, const Matrix& M, const SampleMatrix& X, const Vector& y);

struct DebiasedDifference {
  Vector beta_d;
  Vector sigma_d;  // standard errors
  Vector z;
};

/// diag((s1^2/n1) M1 S1 M1^T + (s2^2/n2) M2 S2 M2^T). Throws NonPositiveVariance.
Vector variance_difference(const Matrix& M1, const Matrix& M2, const Matrix& sigma1, const Matrix& sigma2,
                           double noise1, double noise2, Index n1, Index n2);
Vector variance_difference(const DebiasMatrices& M, const EmpiricalCovariance& sigma1,
                           const EmpiricalCovariance& sigma2, double noise1, double noise2);

/// (beta1 + M1 k1) - (beta2 + M2 k2) with k_j recomputed from the residuals of each task.
DebiasedDifference debias_difference(const FusedFit& fit, const DebiasMatrices& M, const SampleMatrix& X1,
                                     const Vector& y1, const SampleMatrix& X2, const Vector& y2,
                                     double noise1, double noise2);

/// Assemble a debiased difference from two corrected estimates and their covariances.
DebiasedDifference assemble_difference(const Vector& beta1_u, const Vector& beta2_u, const Matrix& M1,
                                       const Matrix& M2, const Matrix& sigma1, const Matrix& sigma2,
                                       double noise1, double noise2, Index n1, Index n2);

/// ||(M1 S1 - I)(b1 - beta1) - (M2 S2 - I)(b2 - beta2)||_inf for known truth.
double empirical_delta(const Vector& beta1_hat, const Vector& beta2_hat, const Matrix& M1, const Matrix& M2,
                       const Matrix& sigma1, const Matrix& sigma2, const Vector& beta1, const Vector& beta2);
double empirical_delta(const FusedFit& fit, const DebiasMatrices& M, const EmpiricalCovariance& sigma1,
                       const EmpiricalCovariance& sigma2, const Vector& beta1, const Vector& beta2);

/// Holder bound on empirical_delta using the realized constraint norms:
/// 1/2 ||M1S1 + M2S2 - 2I|| ||bd_hat - bd||_1 + 1/2 ||M1S1 - M2S2|| ||ba_hat - ba||_1.
double holder_delta_bound(const Vector& beta1_hat, const Vector& beta2_hat, const DebiasMatrices& M,
                          const Matrix& sigma1, const Matrix& sigma2, const Vector& beta1, const Vector& beta2);

}  // namespace diffggm
