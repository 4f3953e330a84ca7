#include "diffggm/lasso.hpp"

#include <algorithm>
#include <cmath>

namespace diffggm {

namespace {

// Columns whose second moment falls below this are pinned at zero.
constexpr double kDegenerateDiag = 1e-14;

}  // namespace

double lasso_kkt_residual(const Vector& beta, const Vector& k_hat, double lambda) {
  double worst = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    const double r = beta(j) != 0.0 ? std::abs(k_hat(j) - lambda * (beta(j) > 0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(k_hat(j)) - lambda);
    worst = std::max(worst, r);
  }
  return worst;
}

double lasso_objective(const GramProblem& prob, const Vector& beta, double lambda) {
  return 0.5 * prob.yty - prob.xty.dot(beta) + 0.5 * beta.dot(prob.gram * beta) +
         lambda * beta.lpNorm<1>();
}

LassoFit solve_lasso_gram(const GramProblem& prob, double lambda, const SolverConfig& cfg,
                          const Vector* warm) {
  cfg.validate();
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
  const Index p = prob.gram.rows();
  if (prob.gram.cols() != p || prob.xty.size() != p) throw DimensionMismatch("gram/xty shape mismatch");

  LassoFit fit;
  fit.lambda = lambda;
  fit.beta = (warm != nullptr && warm->size() == p) ? *warm : Vector::Zero(p);
  for (Index j = 0; j < p; ++j) {
    if (prob.gram(j, j) <= kDegenerateDiag) fit.beta(j) = 0.0;
  }
  // Running gradient of the smooth part, negated: g = xty - gram * beta.
  Vector g = prob.xty - prob.gram * fit.beta;

  auto objective_from = [&](const Vector& b, const Vector& grad) {
    // beta' gram beta = xty' beta - g' beta
    return 0.5 * prob.yty - 0.5 * prob.xty.dot(b) - 0.5 * grad.dot(b) + lambda * b.lpNorm<1>();
  };

  for (int sweep = 1; sweep <= cfg.max_iter; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      const double a = prob.gram(j, j);
      if (a <= kDegenerateDiag) continue;
      const double old = fit.beta(j);
      const double updated = soft_threshold(g(j) + a * old, lambda) / a;
      const double delta = updated - old;
      if (delta != 0.0) {
        fit.beta(j) = updated;
        g.noalias() -= prob.gram.col(j) * delta;
        max_change = std::max(max_change, std::abs(delta) * std::sqrt(a));
      }
    }
    fit.iterations = sweep;
    fit.objective_trace.push_back(objective_from(fit.beta, g));
    if (max_change < cfg.tol) {
      g = prob.xty - prob.gram * fit.beta;
      fit.kkt_residual = lasso_kkt_residual(fit.beta, g, lambda);
      if (fit.kkt_residual < cfg.tol) {
        fit.converged = true;
        break;
      }
    }
  }
  fit.k_hat = prob.xty - prob.gram * fit.beta;
  fit.kkt_residual = lasso_kkt_residual(fit.beta, fit.k_hat, lambda);
  fit.objective = lasso_objective(prob, fit.beta, lambda);
  return fit;
}

LassoFit solve_lasso(const SampleMatrix& X, const Vector& y, double lambda, const SolverConfig& cfg) {
  if (!X.standardized()) throw InvalidArgument("solve_lasso requires a standardized design");
  return solve_lasso_gram(make_gram(X.data(), y), lambda, cfg);
}

Vector subgradient(const SampleMatrix& X, const Vector& y, const Vector& beta) {
  if (X.n() != y.size() || X.p() != beta.size()) throw DimensionMismatch("subgradient: shape mismatch");
  Vector residual = y - X.data() * beta;
  return X.data().transpose() * residual / static_cast<double>(X.n());
}

}  // namespace diffggm
