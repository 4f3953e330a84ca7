#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "diffggm/error.hpp"

namespace diffggm {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/**
 * An n x p data matrix, rows are samples and columns variables.
 *
 * Instances produced by standardize() have every column centered with unit
 * root-mean-square, so that X^T X / n has a unit diagonal.
 */
class SampleMatrix {
 public:
  /// Subtract column means and divide by the (1/n) root mean square.
  static SampleMatrix standardize(const Matrix& raw);

  /// Wrap an existing matrix without transforming it. The standardized flag is
  /// set when the column invariants already hold to 1e-10.
  static SampleMatrix wrap(Matrix data);

  const Matrix& data() const noexcept { return data_; }
  Index n() const noexcept { return data_.rows(); }
  Index p() const noexcept { return data_.cols(); }
  bool standardized() const noexcept { return standardized_; }

 private:
  SampleMatrix(Matrix data, bool standardized) : data_(std::move(data)), standardized_(standardized) {}

  Matrix data_;
  bool standardized_;
};

struct EmpiricalCovariance {
  Matrix sigma_hat;  // X^T X / n
  Index n = 0;
};

/// sigma_hat = X^T X / n. Requires a standardized matrix.
EmpiricalCovariance covariance(const SampleMatrix& X);

/// Sigma with row and column v removed.
Matrix principal_without(const Matrix& sigma, Index v);
/// Column v of sigma with entry v removed.
Vector column_without(const Matrix& sigma, Index v);
/// Columns of X except v.
Matrix drop_column(const Matrix& X, Index v);

/// Ten logarithmically spaced multipliers spanning 0.1 to 100.
std::vector<double> default_k_grid();

struct RegularizationParams {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::vector<double> k_grid = default_k_grid();
  int cv_folds = 3;

  void validate() const;
};

struct SolverConfig {
  int max_iter = 50000;
  double tol = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/**
 * Least-squares data in covariance form. For a design X (n x p) and response y:
 * gram = X^T X / n, xty = X^T y / n, yty = y^T y / n. Both penalized solvers
 * operate on this form, which lets nodewise problems share one covariance.
 */
struct GramProblem {
  Matrix gram;
  Vector xty;
  double yty = 0.0;
  Index n = 0;
};

GramProblem make_gram(const Matrix& X, const Vector& y);

/// Node v regressed on the remaining columns, read off a full second-moment matrix.
GramProblem node_gram(const Matrix& second_moment, Index v, Index n);

/// Independent 64-bit stream seed for (master, stream).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// processed exactly once; results must be written to disjoint slots. The first
/// exception thrown by any task is rethrown after all workers join.
void parallel_for(Index count, unsigned threads, const std::function<void(Index)>& body);

/// Standard normal CDF.
double normal_cdf(double z);
/// Two-sided p-value 2 (1 - Phi(|z|)).
double two_sided_pvalue(double z);
/// Standard normal quantile.
double normal_quantile(double prob);

}  // namespace diffggm
