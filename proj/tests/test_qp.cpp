#include <cmath>
#include <limits>
#include <random>

#include "diffggm/qp.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace diffggm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SolverConfig qp_cfg() { return SolverConfig{50000, 1e-9, 0}; }

// Random problem whose feasible set contains a known point x0; some rows are
// one-sided, some are equalities unless disabled.
BoxConstrainedQp random_feasible(Index d, Index m, std::mt19937_64& rng, Vector* x0_out = nullptr,
                                 bool equalities = true) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  BoxConstrainedQp prob;
  prob.Q = oracle::random_spd(d, rng);
  prob.A = oracle::gaussian_matrix(m, d, rng);
  const Vector x0 = 2.0 * oracle::gaussian_vector(d, rng);
  const Vector ax = prob.A * x0;
  prob.lower.resize(m);
  prob.upper.resize(m);
  for (Index i = 0; i < m; ++i) {
    const double r = unif(rng);
    const double w = 0.5 * unif(rng);
    if (r < 0.25) {
      prob.lower(i) = ax(i) - w;
      prob.upper(i) = kInf;
    } else if (r < 0.5) {
      prob.lower(i) = -kInf;
      prob.upper(i) = ax(i) + w;
    } else if (r < 0.6 && equalities) {
      prob.lower(i) = prob.upper(i) = ax(i);
    } else {
      prob.lower(i) = ax(i) - w;
      prob.upper(i) = ax(i) + w;
    }
  }
  if (x0_out) *x0_out = x0;
  return prob;
}

}  // namespace

TEST_SUITE("qp") {
  TEST_CASE("equality-pinned identity problem returns the pinned point") {
    BoxConstrainedQp prob{Matrix::Identity(3, 3), Matrix::Identity(3, 3), Vector::Unit(3, 0), Vector::Unit(3, 0)};
    const QpSolution sol = solve_qp(prob, qp_cfg());
    CHECK(sol.status == QpStatus::Optimal);
    CHECK((sol.x - Vector::Unit(3, 0)).cwiseAbs().maxCoeff() < 1e-7);
  }

  TEST_CASE("halfspace projection of the origin") {
    BoxConstrainedQp prob;
    prob.Q = Matrix::Identity(2, 2);
    prob.A = Matrix::Ones(1, 2);
    prob.lower = Vector::Constant(1, 1.0);
    prob.upper = Vector::Constant(1, kInf);
    const QpSolution sol = solve_qp(prob, qp_cfg());
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.x(0) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(sol.x(1) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(sol.objective == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(sol.dual(0) < 0.0);  // active lower bound
  }

  TEST_CASE("unbounded rows leave the unconstrained minimum") {
    std::mt19937_64 rng(1);
    BoxConstrainedQp prob{oracle::random_spd(4, rng), oracle::gaussian_matrix(3, 4, rng),
                          Vector::Constant(3, -kInf), Vector::Constant(3, kInf)};
    const QpSolution sol = solve_qp(prob, qp_cfg());
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.x.cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("matches the active-set oracle on random small problems") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> dim(1, 4);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Index d = dim(rng), m = dim(rng);
      const BoxConstrainedQp prob = random_feasible(d, m, rng);
      bool feasible = false;
      const Vector expected = oracle::box_qp(prob.Q, prob.A, prob.lower, prob.upper, &feasible);
      REQUIRE(feasible);
      const QpSolution sol = solve_qp(prob, qp_cfg());
      REQUIRE(sol.status == QpStatus::Optimal);
      worst = std::max(worst, (sol.x - expected).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("optimal solutions are feasible, stationary and complementary") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const BoxConstrainedQp prob = random_feasible(6, 8, rng);
      const QpSolution sol = solve_qp(prob, qp_cfg());
      REQUIRE(sol.status == QpStatus::Optimal);
      CHECK(sol.primal_infeasibility <= kQpFeasTol);
      const Vector ax = prob.A * sol.x;
      for (Index i = 0; i < ax.size(); ++i) {
        CHECK(ax(i) >= prob.lower(i) - kQpFeasTol);
        CHECK(ax(i) <= prob.upper(i) + kQpFeasTol);
      }
      CHECK((prob.Q * sol.x + prob.A.transpose() * sol.dual).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(complementary_slackness(prob.A, prob.lower, prob.upper, sol.x, sol.dual) < 1e-5);
      CHECK(sol.objective == doctest::Approx(0.5 * sol.x.dot(prob.Q * sol.x)).epsilon(1e-9));
    }
  }

  TEST_CASE("no sampled feasible point beats the returned objective") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
      Vector x0;
      const BoxConstrainedQp prob = random_feasible(4, 3, rng, &x0, false);
      const QpSolution sol = solve_qp(prob, qp_cfg());
      REQUIRE(sol.status == QpStatus::Optimal);
      const double best = 0.5 * sol.x.dot(prob.Q * sol.x);
      int checked = 0;
      for (int s = 0; s < 2000; ++s) {
        // Convex combinations of x0 and the solution, jittered, stay mostly feasible.
        const double t = std::abs(normal(rng));
        Vector x = sol.x + t * (x0 - sol.x);
        for (Index j = 0; j < x.size(); ++j) x(j) += 0.05 * normal(rng);
        const Vector ax = prob.A * x;
        bool ok = true;
        for (Index i = 0; i < ax.size() && ok; ++i) ok = ax(i) >= prob.lower(i) && ax(i) <= prob.upper(i);
        if (!ok) continue;
        ++checked;
        CHECK(0.5 * x.dot(prob.Q * x) >= best - 1e-6);
      }
      CHECK(checked > 0);
    }
  }

  TEST_CASE("scaling the cost does not move the minimizer") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      BoxConstrainedQp prob = random_feasible(5, 6, rng);
      const QpSolution a = solve_qp(prob, qp_cfg());
      prob.Q *= 37.5;
      const QpSolution b = solve_qp(prob, qp_cfg());
      REQUIRE(a.status == QpStatus::Optimal);
      REQUIRE(b.status == QpStatus::Optimal);
      CHECK((a.x - b.x).cwiseAbs().maxCoeff() < 1e-5);
    }
  }

  TEST_CASE("prepared solver reuses one factorization across bound vectors") {
    std::mt19937_64 rng(6);
    const BoxConstrainedQp base = random_feasible(4, 4, rng);
    const PreparedQp prepared(base.Q, base.A, qp_cfg());
    CHECK(prepared.num_variables() == 4);
    CHECK(prepared.num_constraints() == 4);
    for (int trial = 0; trial < 5; ++trial) {
      Vector x0 = oracle::gaussian_vector(4, rng);
      const Vector lower = base.A * x0 - Vector::Constant(4, 0.1);
      const Vector upper = base.A * x0 + Vector::Constant(4, 0.1);
      const QpSolution a = prepared.solve(lower, upper);
      const QpSolution b = solve_qp(BoxConstrainedQp{base.Q, base.A, lower, upper}, qp_cfg());
      CHECK((a.x - b.x).cwiseAbs().maxCoeff() < 1e-7);
    }
  }

  TEST_CASE("contradictory bounds are reported as infeasible") {
    BoxConstrainedQp prob;
    prob.Q = Matrix::Identity(1, 1);
    prob.A = Matrix::Ones(2, 1);
    prob.lower = Vector(2);
    prob.upper = Vector(2);
    prob.lower << 1.0, -kInf;
    prob.upper << kInf, 0.0;
    const QpSolution sol = solve_qp(prob, qp_cfg());
    CHECK(sol.status == QpStatus::Infeasible);
    CHECK(std::string(to_string(sol.status)) == "infeasible");
  }

  TEST_CASE("invalid problems are rejected") {
    BoxConstrainedQp prob{Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Zero(2), Vector::Ones(2)};
    prob.Q(1, 1) = -1.0;
    CHECK_THROWS_AS(solve_qp(prob, qp_cfg()), NonPsdCost);
    prob.Q(1, 1) = 1.0;
    prob.lower(0) = 2.0;
    CHECK_THROWS_AS(solve_qp(prob, qp_cfg()), InvalidArgument);
    prob.lower = Vector::Zero(3);
    CHECK_THROWS_AS(solve_qp(prob, qp_cfg()), DimensionMismatch);
  }
}
