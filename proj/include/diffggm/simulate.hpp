#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "diffggm/core.hpp"

namespace diffggm {

/// Undirected edge with i < j.
struct Edge {
  Index i = 0;
  Index j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Ground-truth pair of precision matrices sharing most of their structure.
struct GgmPair {
  Matrix theta1;
  Matrix theta2;
  std::vector<Edge> S1;  // off-diagonal support of theta1, sorted
  std::vector<Edge> S2;
  std::vector<Edge> Sd;  // edges where theta1 and theta2 differ, sorted
  std::uint64_t seed = 0;

  Index p() const noexcept { return theta1.rows(); }
};

/**
 * Build a base precision matrix with random support and weights drawn
 * uniformly from +-[0.2, 0.6], make it diagonally dominant with margin 0.5,
 * then remove two disjoint random edge subsets, one from each copy.
 *
 * Each copy ends up with round(sparsity * C(p,2)) edges and the two removal
 * sets have round(diff_sparsity * C(p,2) / 2) edges each. diff_sparsity == 0
 * yields identical matrices.
 */
GgmPair generate_ggm_pair(Index p, double sparsity, double diff_sparsity, std::uint64_t seed);

/// n i.i.d. draws from N(0, theta^{-1}) using the Cholesky factor of theta.
Matrix sample_gaussian(const Matrix& theta, Index n, std::mt19937_64& rng);

/// Standardized datasets of sizes n1 and n2 drawn from the two models.
std::pair<SampleMatrix, SampleMatrix> sample_dataset(const GgmPair& truth, Index n1, Index n2,
                                                     std::uint64_t seed);

/**
 * Regression of node v on the remaining nodes, in the order of the other
 * node indices. raw_ fields are in the original coordinates; beta and sigma are
 * rescaled to unit-variance variables to match standardized data.
 */
struct NodeTruth {
  Vector beta1, beta2;
  double sigma1 = 0.0, sigma2 = 0.0;  // residual standard deviations
  Vector raw_beta1, raw_beta2;
  double raw_sigma1 = 0.0, raw_sigma2 = 0.0;
};

NodeTruth node_truth(const GgmPair& truth, Index v);

/// Symmetric p x p indicator of Sd.
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> difference_mask(const GgmPair& truth);

/// Off-diagonal support of a symmetric matrix as sorted edges.
std::vector<Edge> support_edges(const Matrix& theta);

}  // namespace diffggm
