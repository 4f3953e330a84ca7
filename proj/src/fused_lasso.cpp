#include "diffggm/fused_lasso.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "diffggm/lasso.hpp"

namespace diffggm {

namespace {

constexpr double kTieThreshold = 1e-12;
constexpr double kDegenerateDiag = 1e-14;

double pair_objective(double a, double z1, double b, double z2, double l1, double l2, double x,
                      double y) {
  return 0.5 * a * x * x - z1 * x + 0.5 * b * y * y - z2 * y + l1 * (std::abs(x) + std::abs(y)) +
         l2 * std::abs(x - y);
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Distance from v to the subdifferential lambda * d|t|.
double subgrad_gap(double v, double t, double lambda) {
  if (t != 0.0) return std::abs(v - lambda * sgn(t));
  return std::max(0.0, std::abs(v) - lambda);
}

}  // namespace

PairSolution solve_fused_pair(double a, double z1, double b, double z2, double l1, double l2) {
  // On the tie x == y the problem is a scalar lasso with weight 2 l1.
  const double t = soft_threshold(z1 + z2, 2.0 * l1) / (a + b);
  PairSolution best{t, t};
  double best_obj = pair_objective(a, z1, b, z2, l1, l2, t, t);
  // Off the tie, sign(x - y) = s fixes the fusion term and the rest separates.
  for (double s : {1.0, -1.0}) {
    const double x = soft_threshold(z1 - l2 * s, l1) / a;
    const double y = soft_threshold(z2 + l2 * s, l1) / b;
    if (sgn(x - y) != s) continue;
    const double obj = pair_objective(a, z1, b, z2, l1, l2, x, y);
    if (obj < best_obj) {
      best_obj = obj;
      best = {x, y};
    }
  }
  return best;
}

double fused_kkt_residual(const Vector& beta1, const Vector& beta2, const Vector& k1, const Vector& k2,
                          double lambda1, double lambda2) {
  double worst = 0.0;
  for (Index j = 0; j < beta1.size(); ++j) {
    const double d = beta1(j) - beta2(j);
    double gap;
    if (std::abs(d) >= kTieThreshold) {
      const double s = sgn(d);
      gap = std::max(subgrad_gap(k1(j) - lambda2 * s, beta1(j), lambda1),
                     subgrad_gap(k2(j) + lambda2 * s, beta2(j), lambda1));
    } else {
      const double t = 0.5 * (beta1(j) + beta2(j));
      if (t != 0.0 && std::abs(t) >= kTieThreshold) {
        // Both tasks share sign(t); the fusion multiplier absorbs the difference.
        const double u = lambda1 * sgn(t);
        const double stationarity = std::abs(k1(j) + k2(j) - 2.0 * u);
        const double s_needed = 0.5 * ((k1(j) - u) - (k2(j) - u));
        gap = std::max(stationarity, std::max(0.0, std::abs(s_needed) - lambda2));
      } else {
        // Need s in [-l2, l2] with |k1 - s| <= l1 and |k2 + s| <= l1.
        const double lo = std::max({-lambda2, k1(j) - lambda1, -k2(j) - lambda1});
        const double hi = std::min({lambda2, k1(j) + lambda1, -k2(j) + lambda1});
        gap = std::max(0.0, lo - hi);
      }
    }
    worst = std::max(worst, gap);
  }
  return worst;
}

double fused_objective(const GramProblem& task1, const GramProblem& task2, const Vector& beta1,
                       const Vector& beta2, double lambda1, double lambda2) {
  return lasso_objective(task1, beta1, lambda1) + lasso_objective(task2, beta2, lambda1) +
         lambda2 * (beta1 - beta2).lpNorm<1>();
}

FusedFit solve_fused_gram(const GramProblem& task1, const GramProblem& task2, double lambda1,
                          double lambda2, const SolverConfig& cfg, const Vector* warm1,
                          const Vector* warm2) {
  cfg.validate();
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InvalidArgument("penalties must be nonnegative");
  const Index p = task1.gram.rows();
  if (task2.gram.rows() != p || task1.xty.size() != p || task2.xty.size() != p) {
    throw DimensionMismatch("fused tasks must share the number of predictors");
  }

  FusedFit fit;
  fit.params.lambda1 = lambda1;
  fit.params.lambda2 = lambda2;
  fit.beta1 = (warm1 != nullptr && warm1->size() == p) ? *warm1 : Vector::Zero(p);
  fit.beta2 = (warm2 != nullptr && warm2->size() == p) ? *warm2 : Vector::Zero(p);
  Vector g1 = task1.xty - task1.gram * fit.beta1;
  Vector g2 = task2.xty - task2.gram * fit.beta2;

  for (int sweep = 1; sweep <= cfg.max_iter; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      const double a = std::max(task1.gram(j, j), kDegenerateDiag);
      const double b = std::max(task2.gram(j, j), kDegenerateDiag);
      const double old1 = fit.beta1(j);
      const double old2 = fit.beta2(j);
      const PairSolution upd =
          solve_fused_pair(a, g1(j) + a * old1, b, g2(j) + b * old2, lambda1, lambda2);
      const double d1 = upd.x - old1;
      const double d2 = upd.y - old2;
      if (d1 != 0.0) {
        fit.beta1(j) = upd.x;
        g1.noalias() -= task1.gram.col(j) * d1;
        max_change = std::max(max_change, std::abs(d1) * std::sqrt(a));
      }
      if (d2 != 0.0) {
        fit.beta2(j) = upd.y;
        g2.noalias() -= task2.gram.col(j) * d2;
        max_change = std::max(max_change, std::abs(d2) * std::sqrt(b));
      }
    }
    fit.iterations = sweep;
    fit.objective_trace.push_back(
        0.5 * task1.yty - 0.5 * task1.xty.dot(fit.beta1) - 0.5 * g1.dot(fit.beta1) + 0.5 * task2.yty -
        0.5 * task2.xty.dot(fit.beta2) - 0.5 * g2.dot(fit.beta2) +
        lambda1 * (fit.beta1.lpNorm<1>() + fit.beta2.lpNorm<1>()) +
        lambda2 * (fit.beta1 - fit.beta2).lpNorm<1>());
    if (max_change < cfg.tol) {
      g1 = task1.xty - task1.gram * fit.beta1;
      g2 = task2.xty - task2.gram * fit.beta2;
      fit.kkt_residual = fused_kkt_residual(fit.beta1, fit.beta2, g1, g2, lambda1, lambda2);
      if (fit.kkt_residual < cfg.tol) {
        fit.converged = true;
        break;
      }
    }
  }
  fit.k1 = task1.xty - task1.gram * fit.beta1;
  fit.k2 = task2.xty - task2.gram * fit.beta2;
  fit.kkt_residual = fused_kkt_residual(fit.beta1, fit.beta2, fit.k1, fit.k2, lambda1, lambda2);
  fit.objective = fused_objective(task1, task2, fit.beta1, fit.beta2, lambda1, lambda2);
  return fit;
}

FusedFit solve_fused(const SampleMatrix& X1, const Vector& y1, const SampleMatrix& X2, const Vector& y2,
                     const RegularizationParams& params, const SolverConfig& cfg) {
  params.validate();
  if (!X1.standardized() || !X2.standardized()) {
    throw InvalidArgument("solve_fused requires standardized designs");
  }
  if (X1.p() != X2.p()) throw DimensionMismatch("fused tasks must share the number of predictors");
  FusedFit fit = solve_fused_gram(make_gram(X1.data(), y1), make_gram(X2.data(), y2), params.lambda1,
                                  params.lambda2, cfg);
  fit.params = params;
  return fit;
}

}  // namespace diffggm
