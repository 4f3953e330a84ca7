#include <algorithm>
#include <cmath>
#include <random>

#include "diffggm/fused_lasso.hpp"
#include "diffggm/lasso.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace diffggm;

namespace {

SolverConfig tight() { return SolverConfig{200000, 1e-12, 0}; }

RegularizationParams penalties(double l1, double l2) {
  RegularizationParams r;
  r.lambda1 = l1;
  r.lambda2 = l2;
  return r;
}

struct TwoTasks {
  SampleMatrix X1, X2;
  Vector y1, y2;
  Vector beta1, beta2;  // generating coefficients
  Vector eps1, eps2;    // generating noise
};

TwoTasks two_tasks(Index n1, Index n2, Index p, std::mt19937_64& rng) {
  SampleMatrix X1 = SampleMatrix::standardize(oracle::gaussian_matrix(n1, p, rng));
  SampleMatrix X2 = SampleMatrix::standardize(oracle::gaussian_matrix(n2, p, rng));
  Vector b1 = Vector::Zero(p), b2 = Vector::Zero(p);
  b1(0) = 0.8;
  b2(0) = 0.8;
  b1(p - 1) = 0.5;
  Vector e1 = 0.5 * oracle::gaussian_vector(n1, rng);
  Vector e2 = 0.5 * oracle::gaussian_vector(n2, rng);
  Vector y1 = X1.data() * b1 + e1;
  Vector y2 = X2.data() * b2 + e2;
  return {std::move(X1), std::move(X2), std::move(y1), std::move(y2), b1, b2, e1, e2};
}

}  // namespace

TEST_SUITE("fused_lasso") {
  TEST_CASE("zero fusion penalty decouples into two lassos") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const TwoTasks t = two_tasks(30, 20, 6, rng);
      const FusedFit fit = solve_fused(t.X1, t.y1, t.X2, t.y2, penalties(0.08, 0.0), tight());
      const LassoFit a = solve_lasso(t.X1, t.y1, 0.08, tight());
      const LassoFit b = solve_lasso(t.X2, t.y2, 0.08, tight());
      CHECK((fit.beta1 - a.beta).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((fit.beta2 - b.beta).cwiseAbs().maxCoeff() < 1e-8);
    }
  }

  TEST_CASE("orthonormal pair example fuses at the averaged threshold") {
    const Matrix design = oracle::orthonormal_design().leftCols(1);
    const Vector y1 = design.col(0) * 1.0;
    const Vector y2 = design.col(0) * 0.9;
    const FusedFit fit = solve_fused(SampleMatrix::wrap(design), y1, SampleMatrix::wrap(design), y2,
                                     penalties(0.1, 0.5), tight());
    CHECK(fit.beta1(0) == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(fit.beta2(0) == doctest::Approx(0.85).epsilon(1e-12));
    const PairSolution pair = solve_fused_pair(1.0, 1.0, 1.0, 0.9, 0.1, 0.5);
    CHECK(pair.x == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(pair.y == doctest::Approx(0.85).epsilon(1e-15));
  }

  TEST_CASE("pair solver matches a dense grid search") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> pos(0.3, 2.0), lin(-1.5, 1.5), pen(0.0, 0.6);
    auto f = [](double a, double z1, double b, double z2, double l1, double l2, double x, double y) {
      return 0.5 * a * x * x - z1 * x + 0.5 * b * y * y - z2 * y + l1 * (std::abs(x) + std::abs(y)) +
             l2 * std::abs(x - y);
    };
    for (int trial = 0; trial < 200; ++trial) {
      const double a = pos(rng), b = pos(rng), z1 = lin(rng), z2 = lin(rng), l1 = pen(rng), l2 = pen(rng);
      const PairSolution s = solve_fused_pair(a, z1, b, z2, l1, l2);
      const double at = f(a, z1, b, z2, l1, l2, s.x, s.y);
      // Exact minimizer: no point of a local grid does better.
      for (int i = -20; i <= 20; ++i) {
        for (int j = -20; j <= 20; ++j) {
          CHECK(at <= f(a, z1, b, z2, l1, l2, s.x + 0.01 * i, s.y + 0.01 * j) + 1e-14);
        }
      }
    }
  }

  TEST_CASE("matches the sign-pattern oracle on random p = 2 instances") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> pen(0.01, 0.5);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const TwoTasks t = two_tasks(12, 9, 2, rng);
      const double l1 = pen(rng), l2 = pen(rng);
      const GramProblem g1 = make_gram(t.X1.data(), t.y1), g2 = make_gram(t.X2.data(), t.y2);
      const auto [e1, e2] = oracle::fused(g1.gram, g1.xty, g2.gram, g2.xty, l1, l2);
      const FusedFit fit = solve_fused(t.X1, t.y1, t.X2, t.y2, penalties(l1, l2), tight());
      worst = std::max({worst, (fit.beta1 - e1).cwiseAbs().maxCoeff(), (fit.beta2 - e2).cwiseAbs().maxCoeff()});
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("swapping the tasks swaps the solution") {
    std::mt19937_64 rng(9);
    const TwoTasks t = two_tasks(40, 25, 7, rng);
    const FusedFit a = solve_fused(t.X1, t.y1, t.X2, t.y2, penalties(0.05, 0.1), tight());
    const FusedFit b = solve_fused(t.X2, t.y2, t.X1, t.y1, penalties(0.05, 0.1), tight());
    CHECK((a.beta1 - b.beta2).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a.beta2 - b.beta1).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("task gap shrinks as the fusion penalty grows") {
    std::mt19937_64 rng(10);
    const TwoTasks t = two_tasks(50, 30, 6, rng);
    const double l1 = 0.02;
    double previous = std::numeric_limits<double>::infinity();
    for (double l2 : {0.0, 10.0 * l1, 1000.0 * l1}) {
      const FusedFit fit = solve_fused(t.X1, t.y1, t.X2, t.y2, penalties(l1, l2), tight());
      const double gap = (fit.beta1 - fit.beta2).cwiseAbs().maxCoeff();
      CHECK(gap <= previous + 1e-12);
      previous = gap;
    }
    CHECK(previous < 1e-10);
  }

  TEST_CASE("fits satisfy KKT, monotone descent and the basic inequality") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
      const TwoTasks t = two_tasks(60, 40, 10, rng);
      const double l1 = 0.05, l2 = 0.08;
      const FusedFit fit = solve_fused(t.X1, t.y1, t.X2, t.y2, penalties(l1, l2), tight());
      REQUIRE(fit.converged);
      for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
        CHECK(fit.objective_trace[i] <=
              fit.objective_trace[i - 1] + 1e-12 * (1.0 + std::abs(fit.objective_trace[i - 1])));
      }
      const Vector k1 = subgradient(t.X1, t.y1, fit.beta1);
      const Vector k2 = subgradient(t.X2, t.y2, fit.beta2);
      CHECK((k1 - fit.k1).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((k2 - fit.k2).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(fused_kkt_residual(fit.beta1, fit.beta2, k1, k2, l1, l2) < 1e-9);

      // With the 1/(2n) loss the basic inequality reads
      // sum_t ||X_t D_t||^2 / (2 n_t) + pen(b_hat) <= sum_t eps_t' X_t D_t / n_t + pen(b).
      const Vector d1 = fit.beta1 - t.beta1, d2 = fit.beta2 - t.beta2;
      const double n1 = 60.0, n2 = 40.0;
      const double lhs = (t.X1.data() * d1).squaredNorm() / (2 * n1) + (t.X2.data() * d2).squaredNorm() / (2 * n2) +
                         l1 * (fit.beta1.lpNorm<1>() + fit.beta2.lpNorm<1>()) +
                         l2 * (fit.beta1 - fit.beta2).lpNorm<1>();
      const double rhs = t.eps1.dot(t.X1.data() * d1) / n1 + t.eps2.dot(t.X2.data() * d2) / n2 +
                         l1 * (t.beta1.lpNorm<1>() + t.beta2.lpNorm<1>()) + l2 * (t.beta1 - t.beta2).lpNorm<1>();
      CHECK(lhs <= rhs + 1e-10);
    }
  }

  TEST_CASE("objective helper matches direct evaluation") {
    std::mt19937_64 rng(14);
    const TwoTasks t = two_tasks(20, 15, 4, rng);
    const GramProblem g1 = make_gram(t.X1.data(), t.y1), g2 = make_gram(t.X2.data(), t.y2);
    const Vector b1 = oracle::gaussian_vector(4, rng), b2 = oracle::gaussian_vector(4, rng);
    const double direct = (t.y1 - t.X1.data() * b1).squaredNorm() / 40.0 +
                          (t.y2 - t.X2.data() * b2).squaredNorm() / 30.0 +
                          0.3 * (b1.lpNorm<1>() + b2.lpNorm<1>()) + 0.2 * (b1 - b2).lpNorm<1>();
    CHECK(fused_objective(g1, g2, b1, b2, 0.3, 0.2) == doctest::Approx(direct).epsilon(1e-12));
  }

  TEST_CASE("mismatched task widths are rejected") {
    std::mt19937_64 rng(15);
    const SampleMatrix X1 = SampleMatrix::standardize(oracle::gaussian_matrix(10, 3, rng));
    const SampleMatrix X2 = SampleMatrix::standardize(oracle::gaussian_matrix(10, 4, rng));
    const Vector y = oracle::gaussian_vector(10, rng);
    CHECK_THROWS_AS(solve_fused(X1, y, X2, y, penalties(0.1, 0.1), tight()), DimensionMismatch);
    CHECK_THROWS_AS(solve_fused(X1, y, X1, y, penalties(-0.1, 0.1), tight()), InvalidArgument);
  }
}
