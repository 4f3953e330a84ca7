#include "diffggm/ggm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "diffggm/fused_lasso.hpp"
#include "diffggm/lasso.hpp"

namespace diffggm {

namespace {

// Cross-validation only ranks grid points, so its fits stop earlier than final fits.
constexpr double kCvTol = 1e-6;
// Held-out errors closer than this (relative) are ties; fits solved to kCvTol
// cannot separate them reliably.
constexpr double kCvTieTol = 1e-6;

bool clearly_better(double candidate, double incumbent) {
  return candidate < incumbent - kCvTieTol * std::max(1.0, std::abs(incumbent));
}

SolverConfig cv_config(const SolverConfig& cfg) {
  SolverConfig out = cfg;
  out.tol = std::max(cfg.tol, kCvTol);
  return out;
}

double heldout_error(const GramProblem& test, const Vector& beta) {
  return test.yty - 2.0 * test.xty.dot(beta) + beta.dot(test.gram * beta);
}

std::vector<std::size_t> descending_order(const std::vector<double>& grid) {
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });
  return order;
}

double log_dimension(Index p) { return std::log(static_cast<double>(std::max<Index>(p, 2))); }

void check_pair(const SampleMatrix& X1, const SampleMatrix& X2) {
  if (X1.p() != X2.p()) {
    throw DimensionMismatch("datasets have " + std::to_string(X1.p()) + " and " + std::to_string(X2.p()) +
                            " variables");
  }
  if (X1.p() < 2) throw InvalidArgument("need at least two variables");
  if (!X1.standardized() || !X2.standardized()) throw InvalidArgument("datasets must be standardized");
}

TestStatMatrix empty_stats(Index p, Method method) {
  TestStatMatrix out;
  out.method = method;
  out.B.resize(p, p - 1);
  out.pvals.resize(p, p - 1);
  out.estimate.resize(p, p - 1);
  out.stderr_d.resize(p, p - 1);
  out.nodes.resize(static_cast<std::size_t>(p));
  return out;
}

void write_row(TestStatMatrix& out, Index v, const DebiasedDifference& diff) {
  out.estimate.row(v) = diff.beta_d.transpose();
  out.stderr_d.row(v) = diff.sigma_d.transpose();
  out.B.row(v) = diff.z.transpose();
  for (Index c = 0; c < diff.z.size(); ++c) out.pvals(v, c) = two_sided_pvalue(diff.z(c));
}

template <typename Fn>
void run_nodes(Index p, unsigned threads, Fn&& per_node) {
  parallel_for(p, threads, [&](Index v) {
    try {
      per_node(v);
    } catch (const NodeFailure&) {
      throw;
    } catch (const std::exception& e) {
      throw NodeFailure(v, e.what());
    }
  });
}

void require_converged(bool converged, const char* what) {
  if (!converged) throw Error(ErrorKind::Numerical, std::string(what) + " did not converge");
}

void require_valid(const DebiasMatrices& M, const Matrix& s1, const Matrix& s2 = Matrix()) {
  if (!M.feasible) throw Error(ErrorKind::Numerical, "debiasing program stayed infeasible");
  if (!verify_constraints(M, s1, s2)) throw Error(ErrorKind::Numerical, "debiasing constraints violated");
}

}  // namespace

const char* to_string(Method method) {
  return method == Method::DebiasedLasso ? "lasso" : "fused";
}

Method method_from_string(const std::string& name) {
  if (name == "lasso") return Method::DebiasedLasso;
  if (name == "fused") return Method::DebiasedFused;
  throw InvalidArgument("unknown method '" + name + "'");
}

const char* to_string(Correction c) { return c == Correction::None ? "none" : "bh"; }

Correction correction_from_string(const std::string& name) {
  if (name == "none") return Correction::None;
  if (name == "bh") return Correction::BH;
  throw InvalidArgument("unknown correction '" + name + "'");
}

void PipelineConfig::validate() const {
  solver.validate();
  qp.validate();
  reg.validate();
  bounds.validate();
  if (!(single_budget_scale > 0.0)) throw InvalidArgument("single budget scale must be positive");
  if (!(joint_cap_scale > 0.0)) throw InvalidArgument("joint budget cap scale must be positive");
}

std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed) {
  if (folds < 1 || n < folds) throw InvalidArgument("need n >= folds >= 1");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = static_cast<int>((r * folds) / n);
  }
  return fold;
}

FoldMoments make_fold_moments(const Matrix& data, int folds, std::uint64_t seed) {
  const Index n = data.rows();
  const std::vector<int> fold = fold_assignment(n, folds, seed);
  Matrix total = data.transpose() * data;
  FoldMoments out;
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> rows;
    for (Index r = 0; r < n; ++r) {
      if (fold[static_cast<std::size_t>(r)] == f) rows.push_back(r);
    }
    Matrix sub(static_cast<Index>(rows.size()), data.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Index>(r)) = data.row(rows[r]);
    Matrix held = sub.transpose() * sub;
    const Index n_test = static_cast<Index>(rows.size());
    out.train.push_back((total - held) / static_cast<double>(n - n_test));
    out.test.push_back(held / static_cast<double>(n_test));
    out.n_train.push_back(n - n_test);
    out.n_test.push_back(n_test);
  }
  return out;
}

CvChoice cross_validate_lasso(const FoldMoments& folds, Index v, const std::vector<double>& k_grid,
                              double lambda_scale, const SolverConfig& cfg) {
  if (k_grid.empty()) throw InvalidArgument("k grid must be nonempty");
  const auto order = descending_order(k_grid);
  const SolverConfig cv_cfg = cv_config(cfg);
  std::vector<double> err(k_grid.size(), 0.0);
  const double nf = static_cast<double>(folds.train.size());
  for (std::size_t f = 0; f < folds.train.size(); ++f) {
    const GramProblem train = node_gram(folds.train[f], v, folds.n_train[f]);
    const GramProblem test = node_gram(folds.test[f], v, folds.n_test[f]);
    Vector warm = Vector::Zero(train.gram.rows());
    for (std::size_t idx : order) {
      const LassoFit fit = solve_lasso_gram(train, k_grid[idx] * lambda_scale, cv_cfg, &warm);
      warm = fit.beta;
      err[idx] += heldout_error(test, fit.beta) / nf;
    }
  }
  CvChoice best{k_grid[order.front()], 0.0, err[order.front()]};
  for (std::size_t idx : order) {
    if (clearly_better(err[idx], best.error)) best = {k_grid[idx], 0.0, err[idx]};
  }
  return best;
}

CvChoice cross_validate_fused(const FoldMoments& folds1, const FoldMoments& folds2, Index v,
                              const std::vector<double>& k_grid, double lambda_scale, const SolverConfig& cfg) {
  if (k_grid.empty()) throw InvalidArgument("k grid must be nonempty");
  if (folds1.train.size() != folds2.train.size()) throw InvalidArgument("fold counts differ between tasks");
  const auto order = descending_order(k_grid);
  const SolverConfig cv_cfg = cv_config(cfg);
  const std::size_t g = k_grid.size();
  std::vector<double> err(g * g, 0.0);
  const double nf = static_cast<double>(folds1.train.size());
  for (std::size_t f = 0; f < folds1.train.size(); ++f) {
    const GramProblem train1 = node_gram(folds1.train[f], v, folds1.n_train[f]);
    const GramProblem train2 = node_gram(folds2.train[f], v, folds2.n_train[f]);
    const GramProblem test1 = node_gram(folds1.test[f], v, folds1.n_test[f]);
    const GramProblem test2 = node_gram(folds2.test[f], v, folds2.n_test[f]);
    Vector row1 = Vector::Zero(train1.gram.rows());
    Vector row2 = row1;
    for (std::size_t i1 : order) {
      Vector w1 = row1, w2 = row2;
      bool first = true;
      for (std::size_t i2 : order) {
        const FusedFit fit = solve_fused_gram(train1, train2, k_grid[i1] * lambda_scale,
                                              k_grid[i2] * lambda_scale, cv_cfg, &w1, &w2);
        w1 = fit.beta1;
        w2 = fit.beta2;
        if (first) {
          row1 = fit.beta1;
          row2 = fit.beta2;
          first = false;
        }
        err[i1 * g + i2] += (heldout_error(test1, fit.beta1) + heldout_error(test2, fit.beta2)) / nf;
      }
    }
  }
  CvChoice best{k_grid[order.front()], k_grid[order.front()], err[order.front() * g + order.front()]};
  for (std::size_t i1 : order) {
    for (std::size_t i2 : order) {
      if (clearly_better(err[i1 * g + i2], best.error)) best = {k_grid[i1], k_grid[i2], err[i1 * g + i2]};
    }
  }
  return best;
}

CvChoice cross_validate_lasso(const SampleMatrix& X, const Vector& y, const std::vector<double>& k_grid,
                              double lambda_scale, int folds, const SolverConfig& cfg) {
  if (X.n() != y.size()) throw DimensionMismatch("design and response lengths differ");
  Matrix augmented(X.n(), X.p() + 1);
  augmented << X.data(), y;
  return cross_validate_lasso(make_fold_moments(augmented, folds, cfg.seed), X.p(), k_grid, lambda_scale, cfg);
}

double estimate_noise_node(const Matrix& moment, const FoldMoments& folds, Index v, Index n, double log_p,
                           const std::vector<double>& k_grid, const SolverConfig& cfg) {
  const GramProblem prob = node_gram(moment, v, n);
  const double scale = std::sqrt(log_p / static_cast<double>(n));
  const CvChoice cv = cross_validate_lasso(folds, v, k_grid, scale, cfg);
  const LassoFit pilot = solve_lasso_gram(prob, cv.k1 * scale, cfg);
  const Index support = (pilot.beta.array() != 0.0).count();
  if (n <= support) throw DegenerateResidual(n, support);
  // ||y - X b||^2 / n = yty - 2 b'xty + b' G b
  const double rss_over_n =
      std::max(0.0, prob.yty - 2.0 * prob.xty.dot(pilot.beta) + pilot.beta.dot(prob.gram * pilot.beta));
  return std::sqrt(rss_over_n * static_cast<double>(n) / static_cast<double>(n - support));
}

double estimate_noise(const SampleMatrix& Xvc, const Vector& xv, const SolverConfig& cfg,
                      const std::vector<double>& k_grid, int folds) {
  if (Xvc.n() != xv.size()) throw DimensionMismatch("design and response lengths differ");
  Matrix augmented(Xvc.n(), Xvc.p() + 1);
  augmented << Xvc.data(), xv;
  const Index n = Xvc.n();
  Matrix moment = augmented.transpose() * augmented / static_cast<double>(n);
  const FoldMoments fm = make_fold_moments(augmented, folds, cfg.seed);
  return estimate_noise_node(moment, fm, Xvc.p(), n, log_dimension(Xvc.p() + 1), k_grid, cfg);
}

NodewiseContext::NodewiseContext(const SampleMatrix& X1, const SampleMatrix& X2, const PipelineConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  check_pair(X1, X2);
  if (X1.n() < cfg_.reg.cv_folds || X2.n() < cfg_.reg.cv_folds) {
    throw InvalidArgument("each dataset needs at least as many samples as CV folds");
  }
  S1_ = covariance(X1).sigma_hat;
  S2_ = covariance(X2).sigma_hat;
  F1_ = make_fold_moments(X1.data(), cfg_.reg.cv_folds, derive_seed(cfg_.solver.seed, 1));
  F2_ = make_fold_moments(X2.data(), cfg_.reg.cv_folds, derive_seed(cfg_.solver.seed, 2));
  n1_ = X1.n();
  n2_ = X2.n();
  p_ = X1.p();
  log_p_ = log_dimension(p_);
}

LassoNodeFit NodewiseContext::lasso_node(Index v) const {
  LassoNodeFit out;
  out.task[0] = node_gram(S1_, v, n1_);
  out.task[1] = node_gram(S2_, v, n2_);
  double noise[2];
  for (int j = 0; j < 2; ++j) {
    const Matrix& S = j == 0 ? S1_ : S2_;
    const FoldMoments& F = j == 0 ? F1_ : F2_;
    const Index n = j == 0 ? n1_ : n2_;
    noise[j] = estimate_noise_node(S, F, v, n, log_p_, cfg_.reg.k_grid, cfg_.solver);
    const double scale = noise[j] * std::sqrt(log_p_ / static_cast<double>(n));
    const CvChoice cv = cross_validate_lasso(F, v, cfg_.reg.k_grid, scale, cfg_.solver);
    out.fit[j] = solve_lasso_gram(out.task[j], cv.k1 * scale, cfg_.solver);
    require_converged(out.fit[j].converged, "lasso");
    const double mu = cfg_.single_budget_scale * std::sqrt(log_p_ / static_cast<double>(n));
    out.M[j] = estimate_m_single(out.task[j].gram, mu, cfg_.qp);
    require_valid(out.M[j], out.task[j].gram);
  }
  out.diag.noise1 = noise[0];
  out.diag.noise2 = noise[1];
  out.diag.lambda1 = out.fit[0].lambda;
  out.diag.lambda2 = out.fit[1].lambda;
  out.diag.mu1 = out.M[0].mu1;
  out.diag.mu2 = out.M[1].mu1;
  out.diag.relaxations = out.M[0].relaxations + out.M[1].relaxations;
  out.diff = assemble_difference(out.fit[0].beta + out.M[0].M1 * out.fit[0].k_hat,
                                 out.fit[1].beta + out.M[1].M1 * out.fit[1].k_hat, out.M[0].M1, out.M[1].M1,
                                 out.task[0].gram, out.task[1].gram, noise[0], noise[1], n1_, n2_);
  return out;
}

FusedNodeFit NodewiseContext::fused_node(Index v) const {
  FusedNodeFit out;
  NodeDiagnostics& diag = out.diag;
  out.task1 = node_gram(S1_, v, n1_);
  out.task2 = node_gram(S2_, v, n2_);
  diag.noise1 = estimate_noise_node(S1_, F1_, v, n1_, log_p_, cfg_.reg.k_grid, cfg_.solver);
  diag.noise2 = estimate_noise_node(S2_, F2_, v, n2_, log_p_, cfg_.reg.k_grid, cfg_.solver);
  const double scale = diag.noise2 * std::sqrt(log_p_ / static_cast<double>(n2_));
  const CvChoice cv = cross_validate_fused(F1_, F2_, v, cfg_.reg.k_grid, scale, cfg_.solver);
  diag.lambda1 = cv.k1 * scale;
  diag.lambda2 = cv.k2 * scale;
  out.fit = solve_fused_gram(out.task1, out.task2, diag.lambda1, diag.lambda2, cfg_.solver);
  require_converged(out.fit.converged, "fused lasso");
  auto [mu1, mu2] = bias_bounds(diag.lambda1, diag.lambda2, n2_, cfg_.bounds);
  const double cap = cfg_.joint_cap_scale * std::sqrt(log_p_ / static_cast<double>(std::max(n1_, n2_)));
  mu1 = std::min(mu1, cap);
  mu2 = std::min(mu2, cap);
  out.M = estimate_m_joint(out.task1.gram, out.task2.gram, n1_, n2_, mu1, mu2, cfg_.qp);
  require_valid(out.M, out.task1.gram, out.task2.gram);
  diag.mu1 = out.M.mu1;
  diag.mu2 = out.M.mu2;
  diag.relaxations = out.M.relaxations;
  out.diff = assemble_difference(out.fit.beta1 + out.M.M1 * out.fit.k1, out.fit.beta2 + out.M.M2 * out.fit.k2,
                                 out.M.M1, out.M.M2, out.task1.gram, out.task2.gram, diag.noise1, diag.noise2,
                                 n1_, n2_);
  return out;
}

TestStatMatrix nodewise_lasso_stats(const SampleMatrix& X1, const SampleMatrix& X2, const PipelineConfig& cfg) {
  const NodewiseContext ctx(X1, X2, cfg);
  TestStatMatrix out = empty_stats(ctx.p(), Method::DebiasedLasso);
  run_nodes(ctx.p(), cfg.threads, [&](Index v) {
    const LassoNodeFit node = ctx.lasso_node(v);
    out.nodes[static_cast<std::size_t>(v)] = node.diag;
    write_row(out, v, node.diff);
  });
  return out;
}

TestStatMatrix nodewise_fused_stats(const SampleMatrix& X1, const SampleMatrix& X2, const PipelineConfig& cfg) {
  const NodewiseContext ctx(X1, X2, cfg);
  TestStatMatrix out = empty_stats(ctx.p(), Method::DebiasedFused);
  run_nodes(ctx.p(), cfg.threads, [&](Index v) {
    const FusedNodeFit node = ctx.fused_node(v);
    out.nodes[static_cast<std::size_t>(v)] = node.diag;
    write_row(out, v, node.diff);
  });
  return out;
}

TestStatMatrix nodewise_stats(Method method, const SampleMatrix& X1, const SampleMatrix& X2,
                              const PipelineConfig& cfg) {
  return method == Method::DebiasedLasso ? nodewise_lasso_stats(X1, X2, cfg) : nodewise_fused_stats(X1, X2, cfg);
}

BoolMatrix select_edges(const Matrix& pvals, double alpha, Correction correction) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0,1)");
  BoolMatrix out = BoolMatrix::Constant(pvals.rows(), pvals.cols(), false);
  if (correction == Correction::None) {
    out = (pvals.array() < alpha).matrix();
    return out;
  }
  std::vector<double> sorted(pvals.data(), pvals.data() + pvals.size());
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  double cutoff = -1.0;
  for (std::size_t k = sorted.size(); k-- > 0;) {
    if (sorted[k] <= static_cast<double>(k + 1) * alpha / m) {
      cutoff = sorted[k];
      break;
    }
  }
  if (cutoff >= 0.0) out = (pvals.array() <= cutoff).matrix();
  return out;
}

BoolMatrix select_edges(const TestStatMatrix& stats, double alpha, Correction correction) {
  return select_edges(stats.pvals, alpha, correction);
}

Matrix symmetrized_pvalues(const Matrix& pvals) {
  const Index p = pvals.rows();
  Matrix out = pvals;
  for (Index v = 0; v < p; ++v) {
    for (Index c = 0; c < p - 1; ++c) {
      const Index j = column_node(v, c);
      out(v, c) = std::max(pvals(v, c), pvals(j, node_column(j, v)));
    }
  }
  return out;
}

}  // namespace diffggm
