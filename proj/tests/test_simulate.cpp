#include <algorithm>
#include <cmath>
#include <random>

#include "diffggm/simulate.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace diffggm;

namespace {

GgmPair fixed_pair(const Matrix& theta1, const Matrix& theta2) {
  GgmPair g;
  g.theta1 = theta1;
  g.theta2 = theta2;
  g.S1 = support_edges(theta1);
  g.S2 = support_edges(theta2);
  return g;
}

double min_eigenvalue(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("default scenario hits the requested edge densities") {
    for (std::uint64_t seed : {0ull, 1ull, 2ull, 3ull}) {
      const GgmPair g = generate_ggm_pair(75, 0.19, 0.03, seed);
      const double pairs = 75.0 * 74.0 / 2.0;
      CHECK(g.p() == 75);
      CHECK(std::abs(static_cast<double>(g.S1.size()) / pairs - 0.19) <= 0.02);
      CHECK(std::abs(static_cast<double>(g.S2.size()) / pairs - 0.19) <= 0.02);
      CHECK(std::abs(static_cast<double>(g.Sd.size()) / pairs - 0.03) <= 0.02);
      CHECK(g.S1.size() == static_cast<std::size_t>(std::llround(0.19 * pairs)));
      CHECK(g.S1.size() == g.S2.size());
    }
  }

  TEST_CASE("small instance is positive definite with exactly counted supports") {
    const GgmPair g = generate_ggm_pair(6, 0.4, 0.14, 5);
    CHECK(min_eigenvalue(g.theta1) > 0.0);
    CHECK(min_eigenvalue(g.theta2) > 0.0);
    CHECK(g.S1.size() == 6);  // round(0.4 * 15)
    CHECK(g.Sd.size() == 2);  // two removals of round(0.14 * 15 / 2) = 1 edge
    // Sd is exactly the set of entries where the two matrices differ.
    std::vector<Edge> differ;
    for (Index i = 0; i < 6; ++i) {
      for (Index j = i + 1; j < 6; ++j) {
        if (g.theta1(i, j) != g.theta2(i, j)) differ.push_back({i, j});
      }
    }
    CHECK(differ == g.Sd);
    CHECK((g.theta1 - g.theta1.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (Index i = 0; i < 6; ++i) {
      for (Index j = 0; j < 6; ++j) {
        if (i == j || g.theta1(i, j) == 0.0) continue;
        CHECK(std::abs(g.theta1(i, j)) >= 0.2);
        CHECK(std::abs(g.theta1(i, j)) <= 0.6);
      }
    }
  }

  TEST_CASE("every generated pair is positive definite") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const GgmPair g = generate_ggm_pair(30, 0.19, 0.03, seed);
      CHECK(min_eigenvalue(g.theta1) > 0.0);
      CHECK(min_eigenvalue(g.theta2) > 0.0);
    }
  }

  TEST_CASE("zero difference sparsity yields identical matrices") {
    const GgmPair g = generate_ggm_pair(20, 0.2, 0.0, 9);
    CHECK(g.Sd.empty());
    CHECK(g.theta1 == g.theta2);
  }

  TEST_CASE("unreachable targets are rejected") {
    CHECK_THROWS_AS(generate_ggm_pair(6, 0.4, 0.01, 1), InfeasibleTargets);
    CHECK_THROWS_AS(generate_ggm_pair(6, 0.01, 0.0, 1), InfeasibleTargets);
    CHECK_THROWS_AS(generate_ggm_pair(6, 0.0, 0.0, 1), InvalidArgument);
    CHECK_THROWS_AS(generate_ggm_pair(6, 0.2, 0.3, 1), InvalidArgument);
  }

  TEST_CASE("same seed reproduces bit-identical output") {
    const GgmPair a = generate_ggm_pair(25, 0.19, 0.03, 77);
    const GgmPair b = generate_ggm_pair(25, 0.19, 0.03, 77);
    CHECK(a.theta1 == b.theta1);
    CHECK(a.theta2 == b.theta2);
    CHECK(a.Sd == b.Sd);
    const auto [x1, x2] = sample_dataset(a, 50, 30, 4);
    const auto [y1, y2] = sample_dataset(a, 50, 30, 4);
    CHECK(x1.data() == y1.data());
    CHECK(x2.data() == y2.data());
    const GgmPair c = generate_ggm_pair(25, 0.19, 0.03, 78);
    CHECK_FALSE(a.theta1 == c.theta1);
  }

  TEST_CASE("sample covariance approaches the model covariance") {
    const GgmPair g = generate_ggm_pair(8, 0.3, 0.1, 3);
    std::mt19937_64 rng(12);
    const Index n = 100000;
    const Matrix x = sample_gaussian(g.theta1, n, rng);
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const Matrix empirical = centered.transpose() * centered / static_cast<double>(n);
    const Matrix model = g.theta1.inverse();
    CHECK((empirical - model).cwiseAbs().maxCoeff() < 0.02);
  }

  TEST_CASE("identity precision gives independent unit-variance coordinates") {
    std::mt19937_64 rng(13);
    const Matrix x = sample_gaussian(Matrix::Identity(4, 4), 10000, rng);
    for (Index j = 0; j < 4; ++j) {
      const double var = (x.col(j).array() - x.col(j).mean()).square().mean();
      CHECK(var >= 0.95);
      CHECK(var <= 1.05);
    }
  }

  TEST_CASE("datasets are standardized with the requested sizes") {
    const GgmPair g = generate_ggm_pair(10, 0.2, 0.05, 1);
    const auto [X1, X2] = sample_dataset(g, 40, 25, 2);
    CHECK(X1.n() == 40);
    CHECK(X2.n() == 25);
    CHECK(X1.p() == 10);
    CHECK(X1.standardized());
    CHECK(X2.standardized());
  }

  TEST_CASE("node regressions of simple precision matrices") {
    const GgmPair ident = fixed_pair(Matrix::Identity(4, 4), Matrix::Identity(4, 4));
    for (Index v = 0; v < 4; ++v) {
      const NodeTruth t = node_truth(ident, v);
      CHECK(t.raw_beta1.cwiseAbs().maxCoeff() == 0.0);
      CHECK(t.beta2.cwiseAbs().maxCoeff() == 0.0);
      CHECK(t.raw_sigma1 == doctest::Approx(1.0));
      CHECK(t.sigma2 == doctest::Approx(1.0));
    }

    Matrix theta(2, 2);
    theta << 2, 1, 1, 2;
    const NodeTruth t = node_truth(fixed_pair(theta, theta), 0);
    CHECK(t.raw_beta1(0) == doctest::Approx(-0.5));
    CHECK(t.raw_sigma1 * t.raw_sigma1 == doctest::Approx(0.5));
    // Equal marginal variances leave the standardized coefficient unchanged.
    CHECK(t.beta1(0) == doctest::Approx(-0.5));

    Matrix iso = Matrix::Identity(3, 3) * 2.0;
    iso(1, 2) = iso(2, 1) = 0.5;
    const NodeTruth t0 = node_truth(fixed_pair(iso, iso), 0);
    CHECK(t0.raw_beta1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(t0.beta1.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("standardized truth matches a regression on the model covariance") {
    const GgmPair g = generate_ggm_pair(7, 0.4, 0.1, 21);
    const Matrix cov = g.theta1.inverse();
    const Vector sd = cov.diagonal().cwiseSqrt();
    const Matrix corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
    for (Index v = 0; v < 7; ++v) {
      const NodeTruth t = node_truth(g, v);
      const Vector beta = principal_without(corr, v).ldlt().solve(column_without(corr, v));
      CHECK((t.beta1 - beta).cwiseAbs().maxCoeff() < 1e-10);
      const double resid = 1.0 - column_without(corr, v).dot(beta);
      CHECK(t.sigma1 * t.sigma1 == doctest::Approx(resid).epsilon(1e-10));
    }
  }

  TEST_CASE("raw regression differences occur exactly on the difference edges") {
    const GgmPair g = generate_ggm_pair(15, 0.25, 0.08, 4);
    const auto mask = difference_mask(g);
    for (Index v = 0; v < 15; ++v) {
      const NodeTruth t = node_truth(g, v);
      for (Index j = 0; j < 15; ++j) {
        if (j == v) continue;
        const Index c = j < v ? j : j - 1;
        CHECK((t.raw_beta1(c) != t.raw_beta2(c)) == mask(v, j));
      }
    }
    CHECK(mask == mask.transpose());
    CHECK(static_cast<std::size_t>(mask.count()) == 2 * g.Sd.size());
  }
}
