#include "diffggm/debias.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffggm/qp.hpp"

namespace diffggm {

namespace {

constexpr int kMaxRelaxations = 200;

constexpr int kRepairAttempts = 3;

void require_square(const Matrix& s, const char* what) {
  if (s.rows() != s.cols()) throw DimensionMismatch(std::string(what) + " must be square");
}

// Bound overshoot accepted by verify_constraints for a budget mu.
double constraint_slack(double mu) { return mu * 1e-6 + 1e-12; }

// Solve one row; false means the budget is treated as too tight. A budget the
// solver cannot certify (iteration limit near the feasibility boundary) is
// relaxed like an infeasible one. An unpolished answer may overshoot a bound
// by up to the solver tolerance, which can exceed the verification slack for
// small budgets; such rows are re-solved with the bounds pulled in.
bool solve_row(const PreparedQp& qp, const Vector& lower, const Vector& upper, const Matrix& A, double slack,
               Vector& x) {
  Vector lo = lower, hi = upper;
  for (int attempt = 0; attempt <= kRepairAttempts; ++attempt) {
    const QpSolution sol = qp.solve(lo, hi);
    if (sol.status != QpStatus::Optimal) return false;
    const Vector ax = A * sol.x;
    const double overshoot = std::max((lower - ax).maxCoeff(), (ax - upper).maxCoeff());
    if (overshoot <= slack) {
      x = sol.x;
      return true;
    }
    const double margin = overshoot + kQpFeasTol;
    if (((hi - lo).array() < 2.0 * margin).any()) return false;
    lo.array() += margin;
    hi.array() -= margin;
  }
  return false;
}

}  // namespace

void BiasBoundsConfig::validate() const {
  if (!(c > 1.0) || !(a > 1.0)) throw InvalidArgument("bias bound constants c and a must exceed 1");
  if (s_d < 1 || s_12 < 1) throw InvalidArgument("sparsity assumptions must be positive");
  if (!(m > 0.0 && m < 1.0)) throw InvalidArgument("rate exponent m must lie in (0,1)");
}

std::pair<double, double> bias_bounds(double lambda1, double lambda2, int s_d, int s_12, Index n2, double c,
                                      double a, double m) {
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) throw InvalidArgument("bias_bounds needs positive penalties");
  if (n2 < 1) throw InvalidArgument("bias_bounds needs n2 >= 1");
  BiasBoundsConfig{c, a, s_d, s_12, m}.validate();
  const double rate = std::pow(static_cast<double>(n2), m);
  const double mu1 = 1.0 / (c * lambda2 * s_d * rate);
  const double mu2 = 1.0 / (a * (lambda1 * s_12 + lambda2 * s_d) * rate);
  return {mu1, mu2};
}

std::pair<double, double> bias_bounds(double lambda1, double lambda2, Index n2, const BiasBoundsConfig& cfg) {
  return bias_bounds(lambda1, lambda2, cfg.s_d, cfg.s_12, n2, cfg.c, cfg.a, cfg.m);
}

double default_single_budget(Index p, Index n) {
  return 2.0 * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

DebiasMatrices estimate_m_single(const Matrix& sigma, double mu, const SolverConfig& cfg) {
  require_square(sigma, "covariance");
  if (!(mu >= 0.0)) throw InvalidArgument("budget mu must be nonnegative");
  const Index p = sigma.rows();
  PreparedQp qp(2.0 * sigma, sigma, cfg);

  DebiasMatrices out;
  out.M1.resize(p, p);
  out.mu1 = mu;
  for (int attempt = 0; attempt <= kMaxRelaxations; ++attempt) {
    bool ok = true;
    for (Index i = 0; i < p && ok; ++i) {
      const Vector target = Vector::Unit(p, i);
      Vector x;
      if (!solve_row(qp, target.array() - out.mu1, target.array() + out.mu1, sigma, constraint_slack(out.mu1), x)) {
        ok = false;
        break;
      }
      out.M1.row(i) = x.transpose();
    }
    if (ok) {
      out.feasible = true;
      return out;
    }
    out.mu1 = out.mu1 > 0.0 ? out.mu1 * kBudgetRelaxation : 1e-6;
    ++out.relaxations;
  }
  return out;
}

DebiasMatrices estimate_m_single(const EmpiricalCovariance& sigma, double mu, const SolverConfig& cfg) {
  return estimate_m_single(sigma.sigma_hat, mu, cfg);
}

DebiasMatrices estimate_m_joint(const Matrix& sigma1, const Matrix& sigma2, Index n1, Index n2, double mu1,
                                double mu2, const SolverConfig& cfg) {
  require_square(sigma1, "covariance 1");
  require_square(sigma2, "covariance 2");
  if (sigma1.rows() != sigma2.rows()) throw DimensionMismatch("joint covariances must share dimension");
  if (n1 < 1 || n2 < 1) throw InvalidArgument("sample sizes must be positive");
  if (!(mu1 >= 0.0) || !(mu2 >= 0.0)) throw InvalidArgument("budgets must be nonnegative");
  const Index p = sigma1.rows();

  Matrix Q = Matrix::Zero(2 * p, 2 * p);
  Q.topLeftCorner(p, p) = (2.0 / static_cast<double>(n1)) * sigma1;
  Q.bottomRightCorner(p, p) = (2.0 / static_cast<double>(n2)) * sigma2;
  Matrix A(2 * p, 2 * p);
  A << sigma1, sigma2, sigma1, -sigma2;
  PreparedQp qp(std::move(Q), A, cfg);

  DebiasMatrices out;
  out.M1.resize(p, p);
  out.M2.resize(p, p);
  out.mu1 = mu1;
  out.mu2 = mu2;
  for (int attempt = 0; attempt <= kMaxRelaxations; ++attempt) {
    bool ok = true;
    for (Index i = 0; i < p; ++i) {
      Vector lower(2 * p), upper(2 * p);
      lower.head(p).setConstant(-out.mu1);
      upper.head(p).setConstant(out.mu1);
      lower(i) += 2.0;
      upper(i) += 2.0;
      lower.tail(p).setConstant(-out.mu2);
      upper.tail(p).setConstant(out.mu2);
      Vector x;
      if (!solve_row(qp, lower, upper, A, constraint_slack(std::min(out.mu1, out.mu2)), x)) {
        ok = false;
        break;
      }
      out.M1.row(i) = x.head(p).transpose();
      out.M2.row(i) = x.tail(p).transpose();
    }
    if (ok) {
      out.feasible = true;
      return out;
    }
    out.mu1 = out.mu1 > 0.0 ? out.mu1 * kBudgetRelaxation : 1e-6;
    out.mu2 = out.mu2 > 0.0 ? out.mu2 * kBudgetRelaxation : 1e-6;
    ++out.relaxations;
  }
  return out;
}

DebiasMatrices estimate_m_joint(const EmpiricalCovariance& sigma1, const EmpiricalCovariance& sigma2,
                                double mu1, double mu2, const SolverConfig& cfg) {
  return estimate_m_joint(sigma1.sigma_hat, sigma2.sigma_hat, sigma1.n, sigma2.n, mu1, mu2, cfg);
}

double single_constraint_norm(const Matrix& M, const Matrix& sigma) {
  const Matrix r = M * sigma - Matrix::Identity(M.rows(), sigma.cols());
  return r.cwiseAbs().maxCoeff();
}

std::pair<double, double> joint_constraint_norms(const DebiasMatrices& M, const Matrix& sigma1,
                                                 const Matrix& sigma2) {
  const Matrix a = M.M1 * sigma1;
  const Matrix b = M.M2 * sigma2;
  const Index p = a.rows();
  return {(a + b - 2.0 * Matrix::Identity(p, p)).cwiseAbs().maxCoeff(), (a - b).cwiseAbs().maxCoeff()};
}

bool verify_constraints(const DebiasMatrices& M, const Matrix& sigma1, const Matrix& sigma2) {
  constexpr double slack = 1.0 + 1e-6;
  if (!M.joint()) return single_constraint_norm(M.M1, sigma1) <= M.mu1 * slack + 1e-12;
  const auto [n1, n2] = joint_constraint_norms(M, sigma1, sigma2);
  return n1 <= M.mu1 * slack + 1e-12 && n2 <= M.mu2 * slack + 1e-12;
}

Vector debias_single(const LassoFit& fit, const Matrix& M, const SampleMatrix& X, const Vector& y) {
  if (M.cols() != X.p() || fit.beta.size() != X.p()) throw DimensionMismatch("debias_single: shape mismatch");
  return fit.beta + M * subgradient(X, y, fit.beta);
}

Vector variance_difference(const Matrix& M1, const Matrix& M2, const Matrix& sigma1, const Matrix& sigma2,
                           double noise1, double noise2, Index n1, Index n2) {
  if (M1.cols() != sigma1.rows() || M2.cols() != sigma2.rows() || M1.rows() != M2.rows()) {
    throw DimensionMismatch("variance_difference: shape mismatch");
  }
  const Matrix t1 = M1 * sigma1;
  const Matrix t2 = M2 * sigma2;
  Vector var = (noise1 * noise1 / static_cast<double>(n1)) * (t1.cwiseProduct(M1)).rowwise().sum() +
               (noise2 * noise2 / static_cast<double>(n2)) * (t2.cwiseProduct(M2)).rowwise().sum();
  for (Index i = 0; i < var.size(); ++i) {
    if (!(var(i) > 0.0) || !std::isfinite(var(i))) throw NonPositiveVariance(i);
  }
  return var;
}

Vector variance_difference(const DebiasMatrices& M, const EmpiricalCovariance& sigma1,
                           const EmpiricalCovariance& sigma2, double noise1, double noise2) {
  return variance_difference(M.M1, M.joint() ? M.M2 : M.M1, sigma1.sigma_hat, sigma2.sigma_hat, noise1, noise2,
                             sigma1.n, sigma2.n);
}

DebiasedDifference assemble_difference(const Vector& beta1_u, const Vector& beta2_u, const Matrix& M1,
                                       const Matrix& M2, const Matrix& sigma1, const Matrix& sigma2,
                                       double noise1, double noise2, Index n1, Index n2) {
  DebiasedDifference out;
  out.beta_d = beta1_u - beta2_u;
  out.sigma_d = variance_difference(M1, M2, sigma1, sigma2, noise1, noise2, n1, n2).cwiseSqrt();
  out.z = out.beta_d.cwiseQuotient(out.sigma_d);
  return out;
}

DebiasedDifference debias_difference(const FusedFit& fit, const DebiasMatrices& M, const SampleMatrix& X1,
                                     const Vector& y1, const SampleMatrix& X2, const Vector& y2,
                                     double noise1, double noise2) {
  if (!M.joint()) throw InvalidArgument("debias_difference needs joint debiasing matrices");
  const Vector k1 = subgradient(X1, y1, fit.beta1);
  const Vector k2 = subgradient(X2, y2, fit.beta2);
  const EmpiricalCovariance s1 = covariance(X1);
  const EmpiricalCovariance s2 = covariance(X2);
  return assemble_difference(fit.beta1 + M.M1 * k1, fit.beta2 + M.M2 * k2, M.M1, M.M2, s1.sigma_hat,
                             s2.sigma_hat, noise1, noise2, X1.n(), X2.n());
}

double empirical_delta(const Vector& beta1_hat, const Vector& beta2_hat, const Matrix& M1, const Matrix& M2,
                       const Matrix& sigma1, const Matrix& sigma2, const Vector& beta1, const Vector& beta2) {
  const Index p = beta1.size();
  const Matrix I = Matrix::Identity(p, p);
  const Vector delta = (M1 * sigma1 - I) * (beta1_hat - beta1) - (M2 * sigma2 - I) * (beta2_hat - beta2);
  return delta.cwiseAbs().maxCoeff();
}

double empirical_delta(const FusedFit& fit, const DebiasMatrices& M, const EmpiricalCovariance& sigma1,
                       const EmpiricalCovariance& sigma2, const Vector& beta1, const Vector& beta2) {
  return empirical_delta(fit.beta1, fit.beta2, M.M1, M.M2, sigma1.sigma_hat, sigma2.sigma_hat, beta1, beta2);
}

double holder_delta_bound(const Vector& beta1_hat, const Vector& beta2_hat, const DebiasMatrices& M,
                          const Matrix& sigma1, const Matrix& sigma2, const Vector& beta1, const Vector& beta2) {
  const auto [norm_sum, norm_diff] = joint_constraint_norms(M, sigma1, sigma2);
  const double ld = ((beta1_hat - beta2_hat) - (beta1 - beta2)).lpNorm<1>();
  const double la = ((beta1_hat + beta2_hat) - (beta1 + beta2)).lpNorm<1>();
  return 0.5 * norm_sum * ld + 0.5 * norm_diff * la;
}

}  // namespace diffggm
