#include <cmath>
#include <random>

#include "diffggm/debias.hpp"
#include "diffggm/fused_lasso.hpp"
#include "diffggm/lasso.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace diffggm;

namespace {

SolverConfig qp_cfg() { return SolverConfig{50000, 1e-9, 0}; }
SolverConfig cd_cfg() { return SolverConfig{100000, 1e-11, 0}; }

// Correlation-like SPD matrix with unit diagonal.
Matrix random_correlation(Index p, std::mt19937_64& rng) {
  const Matrix s = oracle::random_spd(p, rng, 0.4, 2.0);
  const Vector d = s.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * s * d.asDiagonal();
}

double joint_row_objective(const Vector& m1, const Vector& m2, const Matrix& s1, const Matrix& s2, Index n1,
                           Index n2) {
  return m1.dot(s1 * m1) / static_cast<double>(n1) + m2.dot(s2 * m2) / static_cast<double>(n2);
}

}  // namespace

TEST_SUITE("debias") {
  TEST_CASE("bias bounds evaluate the closed form") {
    const auto [mu1, mu2] = bias_bounds(0.5, 0.5, 2, 15, 60, 2.0, 2.0, 0.01);
    CHECK(mu1 == doctest::Approx(0.4800).epsilon(1e-4));
    CHECK(mu2 == doctest::Approx(0.05647).epsilon(1e-4));
    const double rate = std::pow(60.0, 0.01);
    CHECK(mu1 == doctest::Approx(1.0 / (2.0 * 0.5 * 2 * rate)).epsilon(1e-14));
    CHECK(mu2 == doctest::Approx(1.0 / (2.0 * (0.5 * 15 + 0.5 * 2) * rate)).epsilon(1e-14));
    const auto [cfg1, cfg2] = bias_bounds(0.5, 0.5, 60, BiasBoundsConfig{});
    CHECK(cfg1 == mu1);
    CHECK(cfg2 == mu2);
  }

  TEST_CASE("bias bounds strictly decrease in n2 and reject bad inputs") {
    double prev1 = std::numeric_limits<double>::infinity(), prev2 = prev1;
    for (Index n2 : {10, 20, 60, 150, 1000}) {
      const auto [mu1, mu2] = bias_bounds(0.3, 0.2, n2, BiasBoundsConfig{});
      CHECK(mu1 < prev1);
      CHECK(mu2 < prev2);
      prev1 = mu1;
      prev2 = mu2;
    }
    CHECK_THROWS_AS(bias_bounds(0.0, 0.5, 60, BiasBoundsConfig{}), InvalidArgument);
    CHECK_THROWS_AS(bias_bounds(0.5, 0.5, 2, 15, 60, 1.0, 2.0, 0.01), InvalidArgument);
    CHECK_THROWS_AS(bias_bounds(0.5, 0.5, 2, 15, 60, 2.0, 2.0, 1.0), InvalidArgument);
  }

  TEST_CASE("single-task budget default") {
    CHECK(default_single_budget(75, 60) == doctest::Approx(2.0 * std::sqrt(std::log(75.0) / 60.0)));
  }

  TEST_CASE("identity covariance shrinks the identity by the budget") {
    // Row i minimizes |m|^2 subject to |m - e_i|_inf <= mu, so m = max(0, 1 - mu) e_i.
    for (double mu : {0.0, 0.1, 0.5, 1.0, 3.0}) {
      const DebiasMatrices M = estimate_m_single(Matrix::Identity(4, 4), mu, qp_cfg());
      CHECK(M.feasible);
      CHECK_FALSE(M.joint());
      const Matrix expected = std::max(0.0, 1.0 - mu) * Matrix::Identity(4, 4);
      CHECK((M.M1 - expected).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(verify_constraints(M, Matrix::Identity(4, 4)));
    }
  }

  TEST_CASE("zero single budget inverts the covariance") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix S = random_correlation(3, rng);
      const DebiasMatrices M = estimate_m_single(S, 0.0, qp_cfg());
      REQUIRE(M.feasible);
      CHECK((M.M1 - S.inverse()).cwiseAbs().maxCoeff() < 1e-5);
    }
  }

  TEST_CASE("single rows match the active-set oracle") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> budget(0.05, 0.6);
    for (int trial = 0; trial < 30; ++trial) {
      const Matrix S = random_correlation(3, rng);
      const double mu = budget(rng);
      const DebiasMatrices M = estimate_m_single(S, mu, qp_cfg());
      REQUIRE(M.feasible);
      CHECK(M.relaxations == 0);
      CHECK(verify_constraints(M, S));
      for (Index i = 0; i < 3; ++i) {
        const Vector target = Vector::Unit(3, i);
        const Vector expected = oracle::box_qp(S, S, target.array() - mu, target.array() + mu);
        CHECK((M.M1.row(i).transpose() - expected).cwiseAbs().maxCoeff() < 1e-5);
      }
    }
  }

  TEST_CASE("identity covariances with zero joint budgets give identity pairs") {
    const Matrix I = Matrix::Identity(3, 3);
    const DebiasMatrices M = estimate_m_joint(I, I, 80, 30, 0.0, 0.0, qp_cfg());
    REQUIRE(M.feasible);
    CHECK(M.joint());
    CHECK((M.M1 - I).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((M.M2 - I).cwiseAbs().maxCoeff() < 1e-5);
    const Vector var = variance_difference(M.M1, M.M2, I, I, 1.0, 1.0, 80, 30);
    for (Index i = 0; i < 3; ++i) CHECK(var(i) == doctest::Approx(1.0 / 80 + 1.0 / 30).epsilon(1e-4));
  }

  TEST_CASE("joint rows match the active-set oracle at p = 2") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> budget(0.02, 0.5);
    std::uniform_int_distribution<int> sizes(20, 400);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix S1 = random_correlation(2, rng), S2 = random_correlation(2, rng);
      const Index n1 = sizes(rng), n2 = sizes(rng);
      const double mu1 = budget(rng), mu2 = budget(rng);
      const DebiasMatrices M = estimate_m_joint(S1, S2, n1, n2, mu1, mu2, qp_cfg());
      REQUIRE(M.feasible);
      REQUIRE(M.relaxations == 0);
      CHECK(verify_constraints(M, S1, S2));
      Matrix Q = Matrix::Zero(4, 4);
      Q.topLeftCorner(2, 2) = S1 / static_cast<double>(n1);
      Q.bottomRightCorner(2, 2) = S2 / static_cast<double>(n2);
      Matrix A(4, 4);
      A << S1, S2, S1, -S2;
      for (Index i = 0; i < 2; ++i) {
        Vector lower(4), upper(4);
        lower << -mu1, -mu1, -mu2, -mu2;
        upper << mu1, mu1, mu2, mu2;
        lower(i) += 2.0;
        upper(i) += 2.0;
        const Vector expected = oracle::box_qp(Q, A, lower, upper);
        Vector got(4);
        got << M.M1.row(i).transpose(), M.M2.row(i).transpose();
        worst = std::max(worst, (got - expected).cwiseAbs().maxCoeff());
      }
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("joint objective never exceeds the identity pair when it is feasible") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const Index p = 5, n1 = 800, n2 = 60;
      const Matrix S1 = random_correlation(p, rng), S2 = random_correlation(p, rng);
      const DebiasMatrices M = estimate_m_joint(S1, S2, n1, n2, 3.0, 3.0, qp_cfg());
      REQUIRE(M.feasible);
      for (Index i = 0; i < p; ++i) {
        const Vector e = Vector::Unit(p, i);
        const bool identity_feasible = ((S1 * e + S2 * e - 2.0 * e).cwiseAbs().maxCoeff() <= 3.0) &&
                                       ((S1 * e - S2 * e).cwiseAbs().maxCoeff() <= 3.0);
        REQUIRE(identity_feasible);
        CHECK(joint_row_objective(M.M1.row(i).transpose(), M.M2.row(i).transpose(), S1, S2, n1, n2) <=
              joint_row_objective(e, e, S1, S2, n1, n2) + 1e-9);
      }
    }
  }

  TEST_CASE("tight joint budgets are relaxed and recorded") {
    std::mt19937_64 rng(5);
    // Rank-deficient covariances cannot reach small budgets.
    const Matrix Z = oracle::gaussian_matrix(3, 6, rng);
    const Matrix S1 = Z.transpose() * Z / 3.0;
    const Matrix S2 = S1;
    const DebiasMatrices M = estimate_m_joint(S1, S2, 3, 3, 1e-3, 1e-3, qp_cfg());
    CHECK(M.feasible);
    CHECK(M.relaxations > 0);
    CHECK(M.mu1 > 1e-3);
    CHECK(M.mu1 == doctest::Approx(1e-3 * std::pow(kBudgetRelaxation, M.relaxations)));
    CHECK(verify_constraints(M, S1, S2));
  }

  TEST_CASE("debias_single examples") {
    std::mt19937_64 rng(6);
    const SampleMatrix X = SampleMatrix::standardize(oracle::gaussian_matrix(20, 4, rng));
    LassoFit fit;
    fit.beta = oracle::gaussian_vector(4, rng);
    const Vector exact = X.data() * fit.beta;
    CHECK((debias_single(fit, Matrix::Identity(4, 4), X, exact) - fit.beta).cwiseAbs().maxCoeff() < 1e-12);
    const Vector y = oracle::gaussian_vector(20, rng);
    CHECK((debias_single(fit, Matrix::Zero(4, 4), X, y) - fit.beta).cwiseAbs().maxCoeff() == 0.0);

    const SampleMatrix O = SampleMatrix::wrap(oracle::orthonormal_design());
    const Vector yo = oracle::gaussian_vector(4, rng);
    LassoFit ofit;
    ofit.beta = Vector::Zero(3);
    ofit.beta(1) = 0.4;
    // With X^T X / n = I the correction lands on the least-squares coefficients X^T y / n.
    const Vector ls = O.data().transpose() * yo / 4.0;
    CHECK((debias_single(ofit, Matrix::Identity(3, 3), O, yo) - ls).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("variance examples and scaling law") {
    const Matrix I = Matrix::Identity(3, 3);
    const Vector v = variance_difference(I, I, I, I, 1.0, 1.0, 50, 25);
    for (Index i = 0; i < 3; ++i) CHECK(v(i) == doctest::Approx(1.0 / 50 + 1.0 / 25).epsilon(1e-14));

    std::mt19937_64 rng(7);
    const Matrix M1 = oracle::gaussian_matrix(3, 3, rng), M2 = oracle::gaussian_matrix(3, 3, rng);
    const Matrix S1 = random_correlation(3, rng), S2 = random_correlation(3, rng);
    const Vector base = variance_difference(M1, M2, S1, S2, 0.7, 1.3, 40, 30);
    const Vector dense = ((0.49 / 40) * M1 * S1 * M1.transpose() + (1.69 / 30) * M2 * S2 * M2.transpose()).diagonal();
    CHECK((base - dense).cwiseAbs().maxCoeff() < 1e-12);
    const Vector second = (1.69 / 30) * (M2 * S2 * M2.transpose()).diagonal();
    const Vector doubled = variance_difference(M1, M2, S1, S2, 0.7, 2.6, 40, 30);
    CHECK((doubled - (base + 3.0 * second)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("degenerate debiasing rows are rejected") {
    Matrix M = Matrix::Identity(3, 3);
    M.row(1).setZero();
    try {
      variance_difference(M, M, Matrix::Identity(3, 3), Matrix::Identity(3, 3), 1.0, 1.0, 10, 10);
      FAIL("expected NonPositiveVariance");
    } catch (const NonPositiveVariance& e) {
      CHECK(e.index() == 1);
      CHECK(e.kind() == ErrorKind::Numerical);
    }
  }

  TEST_CASE("symmetric inputs give a zero difference") {
    std::mt19937_64 rng(8);
    const SampleMatrix X = SampleMatrix::standardize(oracle::gaussian_matrix(30, 5, rng));
    const Vector y = X.data().col(0) * 0.6 + oracle::gaussian_vector(30, rng);
    RegularizationParams reg;
    reg.lambda1 = 0.05;
    reg.lambda2 = 0.05;
    const FusedFit fit = solve_fused(X, y, X, y, reg, cd_cfg());
    CHECK((fit.beta1 - fit.beta2).cwiseAbs().maxCoeff() == 0.0);
    const Matrix S = covariance(X).sigma_hat;
    DebiasMatrices M = estimate_m_single(S, 0.2, qp_cfg());
    M.M2 = M.M1;
    M.mu2 = M.mu1;
    const DebiasedDifference d = debias_difference(fit, M, X, y, X, y, 1.0, 1.0);
    CHECK(d.beta_d.cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.z.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("decoupled fit equals two single-task debiasings") {
    std::mt19937_64 rng(9);
    const SampleMatrix X1 = SampleMatrix::standardize(oracle::gaussian_matrix(40, 5, rng));
    const SampleMatrix X2 = SampleMatrix::standardize(oracle::gaussian_matrix(30, 5, rng));
    const Vector y1 = X1.data().col(1) + oracle::gaussian_vector(40, rng);
    const Vector y2 = X2.data().col(2) + oracle::gaussian_vector(30, rng);
    RegularizationParams reg;
    reg.lambda1 = 0.1;
    reg.lambda2 = 0.0;
    const FusedFit fit = solve_fused(X1, y1, X2, y2, reg, cd_cfg());
    const EmpiricalCovariance S1 = covariance(X1), S2 = covariance(X2);
    const DebiasMatrices M = estimate_m_joint(S1, S2, 0.3, 0.3, qp_cfg());
    const DebiasedDifference d = debias_difference(fit, M, X1, y1, X2, y2, 1.0, 1.0);
    const LassoFit a = solve_lasso(X1, y1, 0.1, cd_cfg());
    const LassoFit b = solve_lasso(X2, y2, 0.1, cd_cfg());
    const Vector expected = debias_single(a, M.M1, X1, y1) - debias_single(b, M.M2, X2, y2);
    CHECK((d.beta_d - expected).cwiseAbs().maxCoeff() < 1e-8);
    const Vector se = variance_difference(M, S1, S2, 1.0, 1.0).cwiseSqrt();
    CHECK((d.sigma_d - se).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((d.z - d.beta_d.cwiseQuotient(se)).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("debiased difference is unbiased over Monte-Carlo replicates") {
    const Index p = 5, n1 = 300, n2 = 150;
    Vector beta1(p), beta2(p);
    beta1 << 0.8, 0.0, -0.5, 0.0, 0.3;
    beta2 << 0.8, 0.4, -0.5, 0.0, 0.0;
    std::mt19937_64 rng(10);
    const int reps = 200;
    Matrix draws(reps, p);
    RegularizationParams reg;
    reg.lambda1 = 0.05;
    reg.lambda2 = 0.05;
    for (int r = 0; r < reps; ++r) {
      const SampleMatrix X1 = SampleMatrix::standardize(oracle::gaussian_matrix(n1, p, rng));
      const SampleMatrix X2 = SampleMatrix::standardize(oracle::gaussian_matrix(n2, p, rng));
      const Vector y1 = X1.data() * beta1 + oracle::gaussian_vector(n1, rng);
      const Vector y2 = X2.data() * beta2 + oracle::gaussian_vector(n2, rng);
      const FusedFit fit = solve_fused(X1, y1, X2, y2, reg, cd_cfg());
      const DebiasMatrices M = estimate_m_joint(covariance(X1), covariance(X2), 0.02, 0.02, qp_cfg());
      draws.row(r) = debias_difference(fit, M, X1, y1, X2, y2, 1.0, 1.0).beta_d.transpose();
    }
    const Vector mean = draws.colwise().mean();
    const Vector truth = beta1 - beta2;
    for (Index j = 0; j < p; ++j) {
      const double sd = std::sqrt((draws.col(j).array() - mean(j)).square().sum() / (reps - 1));
      CHECK(std::abs(mean(j) - truth(j)) <= 3.0 * sd / std::sqrt(static_cast<double>(reps)));
    }
  }

  TEST_CASE("realized bias examples and the Holder bound") {
    std::mt19937_64 rng(11);
    const Matrix S1 = random_correlation(4, rng), S2 = random_correlation(4, rng);
    const Vector b1 = oracle::gaussian_vector(4, rng), b2 = oracle::gaussian_vector(4, rng);
    const Matrix M1 = oracle::gaussian_matrix(4, 4, rng), M2 = oracle::gaussian_matrix(4, 4, rng);
    CHECK(empirical_delta(b1, b2, M1, M2, S1, S2, b1, b2) == 0.0);
    const Vector h1 = oracle::gaussian_vector(4, rng), h2 = oracle::gaussian_vector(4, rng);
    CHECK(empirical_delta(h1, h2, S1.inverse(), S2.inverse(), S1, S2, b1, b2) < 1e-12);

    for (int trial = 0; trial < 30; ++trial) {
      const Index p = 6, n1 = 100, n2 = 40;
      const SampleMatrix X1 = SampleMatrix::standardize(oracle::gaussian_matrix(n1, p, rng));
      const SampleMatrix X2 = SampleMatrix::standardize(oracle::gaussian_matrix(n2, p, rng));
      Vector t1 = Vector::Zero(p), t2 = Vector::Zero(p);
      t1(0) = 0.7;
      t2(0) = 0.7;
      t2(3) = -0.4;
      const Vector y1 = X1.data() * t1 + oracle::gaussian_vector(n1, rng);
      const Vector y2 = X2.data() * t2 + oracle::gaussian_vector(n2, rng);
      RegularizationParams reg;
      reg.lambda1 = 0.08;
      reg.lambda2 = 0.08;
      const FusedFit fit = solve_fused(X1, y1, X2, y2, reg, cd_cfg());
      const EmpiricalCovariance C1 = covariance(X1), C2 = covariance(X2);
      const DebiasMatrices M = estimate_m_joint(C1, C2, 0.2, 0.1, qp_cfg());
      REQUIRE(verify_constraints(M, C1.sigma_hat, C2.sigma_hat));
      const double delta = empirical_delta(fit, M, C1, C2, t1, t2);
      const double bound = holder_delta_bound(fit.beta1, fit.beta2, M, C1.sigma_hat, C2.sigma_hat, t1, t2);
      CHECK(delta <= bound + 1e-10);
      // The realized norms never exceed the enforced budgets, so the budget form also holds.
      const double ld = ((fit.beta1 - fit.beta2) - (t1 - t2)).lpNorm<1>();
      const double la = ((fit.beta1 + fit.beta2) - (t1 + t2)).lpNorm<1>();
      CHECK(delta <= 0.5 * M.mu1 * (1 + 1e-6) * ld + 0.5 * M.mu2 * (1 + 1e-6) * la + 1e-10);
    }
  }

  TEST_CASE("constraint norms are recomputed from the matrices") {
    DebiasMatrices M;
    M.M1 = 0.9 * Matrix::Identity(2, 2);
    M.M2 = 1.05 * Matrix::Identity(2, 2);
    M.mu1 = 0.05;
    M.mu2 = 0.15;
    const auto [sum_norm, diff_norm] = joint_constraint_norms(M, Matrix::Identity(2, 2), Matrix::Identity(2, 2));
    CHECK(sum_norm == doctest::Approx(0.05));
    CHECK(diff_norm == doctest::Approx(0.15));
    CHECK(verify_constraints(M, Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
    M.mu2 = 0.1;
    CHECK_FALSE(verify_constraints(M, Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
    CHECK(single_constraint_norm(M.M1, Matrix::Identity(2, 2)) == doctest::Approx(0.1));
  }
}
