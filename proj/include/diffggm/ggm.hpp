#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffggm/core.hpp"
#include "diffggm/debias.hpp"
#include "diffggm/fused_lasso.hpp"
#include "diffggm/lasso.hpp"

namespace diffggm {

enum class Method { DebiasedLasso, DebiasedFused };

const char* to_string(Method method);
/// Accepts "lasso" and "fused".
Method method_from_string(const std::string& name);

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-node record of the quantities chosen inside the pipeline.
struct NodeDiagnostics {
  double noise1 = 0.0;
  double noise2 = 0.0;
  double lambda1 = 0.0;  // task-1 penalty (lasso) or shared sparsity penalty (fused)
  double lambda2 = 0.0;  // task-2 penalty (lasso) or fusion penalty (fused)
  double mu1 = 0.0;
  double mu2 = 0.0;
  int relaxations = 0;
};

/**
 * P x (P-1) edge-difference statistics. Row v holds the regression of node v
 * on the other nodes, columns follow the other node indices in increasing order.
 */
struct TestStatMatrix {
  Matrix B;         // z-statistics
  Matrix pvals;     // 2 (1 - Phi(|B|))
  Matrix estimate;  // debiased differences beta_1U - beta_2U
  Matrix stderr_d;  // their standard errors
  Method method = Method::DebiasedLasso;
  std::vector<NodeDiagnostics> nodes;

  Index p() const noexcept { return B.rows(); }
};

/// Node index for column c of row v.
inline Index column_node(Index v, Index c) { return c < v ? c : c + 1; }
/// Column of row v holding node j (j != v).
inline Index node_column(Index v, Index j) { return j < v ? j : j - 1; }

struct PipelineConfig {
  SolverConfig solver{50000, 1e-9, 0};  // coordinate descent; seed drives the CV folds
  SolverConfig qp{50000, 1e-7, 0};
  RegularizationParams reg;
  BiasBoundsConfig bounds;
  double single_budget_scale = 2.0;  // single-task mu = scale * sqrt(log p / n)
  // Joint budgets are capped at scale * sqrt(log p / max(n1, n2)) before relaxation.
  double joint_cap_scale = 2.0;
  unsigned threads = 1;

  void validate() const;
};

/// Sample-to-fold map: contiguous blocks after a seeded shuffle.
std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed);

/// Train/test second-moment matrices of a dataset for every CV fold.
struct FoldMoments {
  std::vector<Matrix> train;
  std::vector<Matrix> test;
  std::vector<Index> n_train;
  std::vector<Index> n_test;
};

FoldMoments make_fold_moments(const Matrix& data, int folds, std::uint64_t seed);

struct CvChoice {
  double k1 = 0.0;
  double k2 = 0.0;  // fused only
  double error = 0.0;
};

/// k minimizing held-out squared error for lambda = k * lambda_scale; node v
/// is the response. Grid points are visited from the largest k down with warm
/// starts, and ties keep the larger penalty.
CvChoice cross_validate_lasso(const FoldMoments& folds, Index v, const std::vector<double>& k_grid,
                              double lambda_scale, const SolverConfig& cfg);

/// (k1, k2) for lambda1 = k1 * scale, lambda2 = k2 * scale; held-out errors
/// of the two tasks are each averaged over their held-out samples and summed.
CvChoice cross_validate_fused(const FoldMoments& folds1, const FoldMoments& folds2, Index v,
                              const std::vector<double>& k_grid, double lambda_scale, const SolverConfig& cfg);

/// Convenience form for a plain regression of y on X.
CvChoice cross_validate_lasso(const SampleMatrix& X, const Vector& y, const std::vector<double>& k_grid,
                              double lambda_scale, int folds, const SolverConfig& cfg);

/// Residual noise level from a cross-validated lasso pilot:
/// sigma^2 = ||y - X beta||^2 / (n - |support|).
double estimate_noise(const SampleMatrix& Xvc, const Vector& xv, const SolverConfig& cfg,
                      const std::vector<double>& k_grid = default_k_grid(), int folds = 3);

/// Nodewise form on a shared second-moment matrix.
double estimate_noise_node(const Matrix& moment, const FoldMoments& folds, Index v, Index n, double log_p,
                           const std::vector<double>& k_grid, const SolverConfig& cfg);

/// Everything computed for one node by the single-task pipeline.
struct LassoNodeFit {
  GramProblem task[2];
  LassoFit fit[2];
  DebiasMatrices M[2];
  NodeDiagnostics diag;
  DebiasedDifference diff;
};

/// Everything computed for one node by the fused pipeline.
struct FusedNodeFit {
  GramProblem task1, task2;
  FusedFit fit;
  DebiasMatrices M;
  NodeDiagnostics diag;
  DebiasedDifference diff;
};

/**
 * Shared, read-only inputs of the nodewise pipelines: both covariances and
 * the CV fold moments, computed once per dataset pair. Node subproblems are
 * principal submatrices of these. Methods are const and reentrant.
 */
class NodewiseContext {
 public:
  NodewiseContext(const SampleMatrix& X1, const SampleMatrix& X2, const PipelineConfig& cfg);

  LassoNodeFit lasso_node(Index v) const;
  FusedNodeFit fused_node(Index v) const;

  Index p() const noexcept { return p_; }
  Index n1() const noexcept { return n1_; }
  Index n2() const noexcept { return n2_; }
  const Matrix& sigma1() const noexcept { return S1_; }
  const Matrix& sigma2() const noexcept { return S2_; }
  const PipelineConfig& config() const noexcept { return cfg_; }

 private:
  PipelineConfig cfg_;
  Matrix S1_, S2_;
  FoldMoments F1_, F2_;
  Index n1_ = 0, n2_ = 0, p_ = 0;
  double log_p_ = 0.0;
};

/// Independent debiased lassos per node and group.
TestStatMatrix nodewise_lasso_stats(const SampleMatrix& X1, const SampleMatrix& X2, const PipelineConfig& cfg);

/// Joint debiased fused lasso per node.
TestStatMatrix nodewise_fused_stats(const SampleMatrix& X1, const SampleMatrix& X2, const PipelineConfig& cfg);

TestStatMatrix nodewise_stats(Method method, const SampleMatrix& X1, const SampleMatrix& X2,
                              const PipelineConfig& cfg);

enum class Correction { None, BH };
const char* to_string(Correction c);
Correction correction_from_string(const std::string& name);

/// Rejections at level alpha, uncorrected or Benjamini-Hochberg over all entries.
BoolMatrix select_edges(const Matrix& pvals, double alpha, Correction correction);
BoolMatrix select_edges(const TestStatMatrix& stats, double alpha, Correction correction);

/// Entry (v, j) takes the larger of the p-values for (v, j) and (j, v).
Matrix symmetrized_pvalues(const Matrix& pvals);

}  // namespace diffggm
