#include "diffggm/simulate.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace diffggm {

namespace {

constexpr double kWeightLow = 0.2;
constexpr double kWeightHigh = 0.6;
constexpr double kDiagonalMargin = 0.5;

Index pair_count(Index p) { return p * (p - 1) / 2; }

Matrix inverse_spd(const Matrix& theta) {
  Eigen::LLT<Matrix> llt(theta);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "precision matrix is not positive definite");
  return llt.solve(Matrix::Identity(theta.rows(), theta.cols()));
}

}  // namespace

std::vector<Edge> support_edges(const Matrix& theta) {
  std::vector<Edge> edges;
  for (Index i = 0; i < theta.rows(); ++i) {
    for (Index j = i + 1; j < theta.cols(); ++j) {
      if (theta(i, j) != 0.0) edges.push_back({i, j});
    }
  }
  return edges;
}

GgmPair generate_ggm_pair(Index p, double sparsity, double diff_sparsity, std::uint64_t seed) {
  if (p < 4) throw InvalidArgument("generate_ggm_pair needs p >= 4");
  if (!(sparsity > 0.0 && sparsity < 1.0)) throw InvalidArgument("sparsity must lie in (0,1)");
  if (!(diff_sparsity >= 0.0 && diff_sparsity <= sparsity)) {
    throw InvalidArgument("diff_sparsity must lie in [0, sparsity]");
  }
  const Index total = pair_count(p);
  const Index keep = static_cast<Index>(std::llround(sparsity * static_cast<double>(total)));
  const Index removed = static_cast<Index>(std::llround(diff_sparsity * static_cast<double>(total) / 2.0));
  if (diff_sparsity > 0.0 && removed == 0) {
    throw InfeasibleTargets("difference sparsity rounds to an empty removal set at this p");
  }
  if (keep + removed > total) throw InfeasibleTargets("requested sparsities exceed the number of vertex pairs");
  if (keep == 0) throw InfeasibleTargets("sparsity rounds to an empty graph at this p");

  std::mt19937_64 rng(seed);
  std::vector<Edge> all;
  all.reserve(static_cast<std::size_t>(total));
  for (Index i = 0; i < p; ++i) {
    for (Index j = i + 1; j < p; ++j) all.push_back({i, j});
  }
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<Edge> base(all.begin(), all.begin() + (keep + removed));

  std::uniform_real_distribution<double> magnitude(kWeightLow, kWeightHigh);
  std::bernoulli_distribution negative(0.5);
  Matrix theta = Matrix::Zero(p, p);
  for (const Edge& e : base) {
    const double w = magnitude(rng) * (negative(rng) ? -1.0 : 1.0);
    theta(e.i, e.j) = w;
    theta(e.j, e.i) = w;
  }
  for (Index i = 0; i < p; ++i) theta(i, i) = theta.row(i).cwiseAbs().sum() + kDiagonalMargin;

  // base is already in random order: first block leaves theta1, second leaves theta2.
  GgmPair out;
  out.seed = seed;
  out.theta1 = theta;
  out.theta2 = theta;
  for (Index r = 0; r < removed; ++r) {
    const Edge& a = base[static_cast<std::size_t>(r)];
    const Edge& b = base[static_cast<std::size_t>(removed + r)];
    out.theta1(a.i, a.j) = out.theta1(a.j, a.i) = 0.0;
    out.theta2(b.i, b.j) = out.theta2(b.j, b.i) = 0.0;
    out.Sd.push_back(a);
    out.Sd.push_back(b);
  }
  std::sort(out.Sd.begin(), out.Sd.end());
  out.S1 = support_edges(out.theta1);
  out.S2 = support_edges(out.theta2);

  for (const Matrix* t : {&out.theta1, &out.theta2}) {
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(*t, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (!(min_eig > 1e-6)) throw Error(ErrorKind::Numerical, "generated precision matrix is not positive definite");
  }
  return out;
}

Matrix sample_gaussian(const Matrix& theta, Index n, std::mt19937_64& rng) {
  // theta = L L^T, x = L^{-T} z has covariance theta^{-1}.
  Eigen::LLT<Matrix> llt(theta);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "precision matrix is not positive definite");
  const Index p = theta.rows();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(p, n);
  for (Index s = 0; s < n; ++s) {
    for (Index k = 0; k < p; ++k) z(k, s) = normal(rng);
  }
  llt.matrixU().solveInPlace(z);
  return z.transpose();
}

std::pair<SampleMatrix, SampleMatrix> sample_dataset(const GgmPair& truth, Index n1, Index n2,
                                                     std::uint64_t seed) {
  if (n1 < 2 || n2 < 2) throw InvalidArgument("sample sizes must be at least 2");
  std::mt19937_64 rng1(derive_seed(seed, 1));
  std::mt19937_64 rng2(derive_seed(seed, 2));
  Matrix raw1 = sample_gaussian(truth.theta1, n1, rng1);
  Matrix raw2 = sample_gaussian(truth.theta2, n2, rng2);
  return {SampleMatrix::standardize(raw1), SampleMatrix::standardize(raw2)};
}

NodeTruth node_truth(const GgmPair& truth, Index v) {
  const Index p = truth.p();
  if (v < 0 || v >= p) throw InvalidArgument("node index out of range");
  NodeTruth out;
  auto fill = [&](const Matrix& theta, Vector& raw_beta, double& raw_sigma, Vector& beta, double& sigma) {
    const Matrix cov = inverse_spd(theta);
    raw_beta = -column_without(theta, v) / theta(v, v);
    raw_sigma = std::sqrt(1.0 / theta(v, v));
    const double sv = std::sqrt(cov(v, v));
    beta.resize(p - 1);
    for (Index k = 0, kk = 0; k < p; ++k) {
      if (k == v) continue;
      beta(kk) = raw_beta(kk) * std::sqrt(cov(k, k)) / sv;
      ++kk;
    }
    sigma = raw_sigma / sv;
  };
  fill(truth.theta1, out.raw_beta1, out.raw_sigma1, out.beta1, out.sigma1);
  fill(truth.theta2, out.raw_beta2, out.raw_sigma2, out.beta2, out.sigma2);
  return out;
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> difference_mask(const GgmPair& truth) {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(truth.p(), truth.p(), false);
  for (const Edge& e : truth.Sd) mask(e.i, e.j) = mask(e.j, e.i) = true;
  return mask;
}

}  // namespace diffggm
