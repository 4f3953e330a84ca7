#include "diffggm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "diffggm/error.hpp"

namespace diffggm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
}

void check_shape(const TestStatMatrix& stats, const GgmPair& truth) {
  const Index p = truth.p();
  if (stats.pvals.rows() != p || stats.pvals.cols() != p - 1 || stats.estimate.rows() != p ||
      stats.estimate.cols() != p - 1 || stats.stderr_d.rows() != p || stats.stderr_d.cols() != p - 1) {
    throw DimensionMismatch("statistics shape does not match a " + std::to_string(p) + "-node truth");
  }
}

struct MeanSe {
  double mean = kNaN;
  double se = kNaN;
};

MeanSe mean_se(const std::vector<double>& values) {
  std::vector<double> kept;
  for (double x : values) {
    if (!std::isnan(x)) kept.push_back(x);
  }
  MeanSe out;
  if (kept.empty()) return out;
  const double n = static_cast<double>(kept.size());
  out.mean = std::accumulate(kept.begin(), kept.end(), 0.0) / n;
  if (kept.size() < 2) {
    out.se = 0.0;
    return out;
  }
  double ss = 0.0;
  for (double x : kept) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / (n - 1.0) / n);
  return out;
}

// Rethrow with the replicate index, preserving the error category.
[[noreturn]] void rethrow_with_replicate(int r) {
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), "replicate " + std::to_string(r) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Numerical, "replicate " + std::to_string(r) + ": " + e.what());
  }
}

PipelineConfig replicate_pipeline(const HarnessConfig& cfg, const ReplicateSeeds& seeds) {
  PipelineConfig pc = cfg.pipeline;
  pc.threads = 1;
  pc.solver.seed = seeds.pipeline;
  pc.qp.seed = seeds.pipeline;
  return pc;
}

// Stack two standardized matrices, shuffle rows, split and re-standardize.
std::pair<SampleMatrix, SampleMatrix> permuted_split(const Matrix& pooled, Index n1, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(pooled.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const Index n2 = pooled.rows() - n1;
  Matrix a(n1, pooled.cols());
  Matrix b(n2, pooled.cols());
  for (Index i = 0; i < n1; ++i) a.row(i) = pooled.row(order[static_cast<std::size_t>(i)]);
  for (Index i = 0; i < n2; ++i) b.row(i) = pooled.row(order[static_cast<std::size_t>(n1 + i)]);
  return {SampleMatrix::standardize(a), SampleMatrix::standardize(b)};
}

}  // namespace

EdgeMetrics edge_metrics(const TestStatMatrix& stats, const GgmPair& truth, double alpha) {
  check_alpha(alpha);
  check_shape(stats, truth);
  const auto mask = difference_mask(truth);
  const Index p = truth.p();
  Index diff_rejected = 0, null_rejected = 0;
  EdgeMetrics out;
  for (Index v = 0; v < p; ++v) {
    for (Index c = 0; c < p - 1; ++c) {
      const bool rejected = stats.pvals(v, c) < alpha;
      if (mask(v, column_node(v, c))) {
        ++out.diff_entries;
        diff_rejected += rejected;
      } else {
        ++out.null_entries;
        null_rejected += rejected;
      }
    }
  }
  if (out.diff_entries > 0) out.power = static_cast<double>(diff_rejected) / static_cast<double>(out.diff_entries);
  if (out.null_entries > 0) out.fp_rate = static_cast<double>(null_rejected) / static_cast<double>(out.null_entries);
  return out;
}

CoverageLength coverage_length(const TestStatMatrix& stats, const GgmPair& truth, double alpha) {
  check_alpha(alpha);
  check_shape(stats, truth);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const auto mask = difference_mask(truth);
  const Index p = truth.p();
  Index covered[2] = {0, 0}, count[2] = {0, 0};
  double length[2] = {0.0, 0.0};
  for (Index v = 0; v < p; ++v) {
    const NodeTruth nt = node_truth(truth, v);
    const Vector diff = nt.beta1 - nt.beta2;
    for (Index c = 0; c < p - 1; ++c) {
      const int set = mask(v, column_node(v, c)) ? 0 : 1;
      const double half = z * stats.stderr_d(v, c);
      ++count[set];
      covered[set] += std::abs(stats.estimate(v, c) - diff(c)) <= half;
      length[set] += 2.0 * half;
    }
  }
  CoverageLength out;
  out.diff_entries = count[0];
  out.null_entries = count[1];
  auto ratio = [](double num, Index den) { return den > 0 ? num / static_cast<double>(den) : kNaN; };
  out.coverage_S = ratio(static_cast<double>(covered[0]), count[0]);
  out.coverage_Sdc = ratio(static_cast<double>(covered[1]), count[1]);
  out.len_S = ratio(length[0], count[0]);
  out.len_Sdc = ratio(length[1], count[1]);
  return out;
}

void Scenario::validate() const {
  if (p < 4) throw InvalidArgument("p must be at least 4");
  if (n1 < 4 || n2 < 4) throw InvalidArgument("sample sizes must be at least 4");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw InvalidArgument("sparsity must lie in [0, 1]");
  if (!(diff_sparsity >= 0.0 && diff_sparsity <= sparsity)) {
    throw InvalidArgument("diff_sparsity must lie in [0, sparsity]");
  }
}

void HarnessConfig::validate() const {
  scenario.validate();
  pipeline.validate();
  check_alpha(alpha);
  if (replicates < 0) throw InvalidArgument("replicates must be non-negative");
  if (methods.empty()) throw InvalidArgument("at least one method is required");
}

ReplicateSeeds replicate_seeds(std::uint64_t seed, int replicate) {
  const std::uint64_t base = derive_seed(seed, static_cast<std::uint64_t>(replicate));
  return {derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3)};
}

std::vector<EvalReport> aggregate(const std::vector<ReplicateRecord>& records, const std::vector<Method>& methods) {
  std::vector<EvalReport> out;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> fp, power, cov_s, cov_c, len_s, len_c;
    for (const ReplicateRecord& rec : records) {
      const MethodOutcome& o = rec.outcomes.at(m);
      fp.push_back(o.edges.fp_rate);
      power.push_back(o.edges.power);
      cov_s.push_back(o.coverage.coverage_S);
      cov_c.push_back(o.coverage.coverage_Sdc);
      len_s.push_back(o.coverage.len_S);
      len_c.push_back(o.coverage.len_Sdc);
    }
    EvalReport r;
    r.method = methods[m];
    r.replicates = static_cast<int>(records.size());
    const MeanSe f = mean_se(fp), pw = mean_se(power);
    r.fp_rate = f.mean;
    r.fp_se = f.se;
    r.power = pw.mean;
    r.power_se = pw.se;
    r.coverage_S = mean_se(cov_s).mean;
    r.coverage_Sdc = mean_se(cov_c).mean;
    r.len_S = mean_se(len_s).mean;
    r.len_Sdc = mean_se(len_c).mean;
    out.push_back(r);
  }
  return out;
}

BenchmarkResult run_benchmark(const HarnessConfig& cfg) {
  cfg.validate();
  if (cfg.replicates < 1) throw InvalidArgument("benchmark needs at least one replicate");
  const Scenario& sc = cfg.scenario;
  BenchmarkResult out;
  out.records.resize(static_cast<std::size_t>(cfg.replicates));
  parallel_for(cfg.replicates, cfg.threads, [&](Index r) {
    try {
      ReplicateRecord& rec = out.records[static_cast<std::size_t>(r)];
      rec.index = static_cast<int>(r);
      rec.seeds = replicate_seeds(cfg.seed, rec.index);
      const GgmPair truth = generate_ggm_pair(sc.p, sc.sparsity, sc.diff_sparsity, rec.seeds.truth);
      const auto [X1, X2] = sample_dataset(truth, sc.n1, sc.n2, rec.seeds.data);
      const PipelineConfig pc = replicate_pipeline(cfg, rec.seeds);
      for (Method m : cfg.methods) {
        const TestStatMatrix stats = nodewise_stats(m, X1, X2, pc);
        rec.outcomes.push_back({m, edge_metrics(stats, truth, cfg.alpha), coverage_length(stats, truth, cfg.alpha)});
      }
    } catch (...) {
      rethrow_with_replicate(static_cast<int>(r));
    }
  });
  out.reports = aggregate(out.records, cfg.methods);
  return out;
}

std::vector<PowerPoint> power_curve(const HarnessConfig& cfg, const std::vector<Index>& n2_grid) {
  if (n2_grid.empty()) throw InvalidArgument("n2 grid must not be empty");
  std::vector<PowerPoint> out;
  for (Index n2 : n2_grid) {
    HarnessConfig point = cfg;
    point.scenario.n2 = n2;
    const BenchmarkResult res = run_benchmark(point);
    for (const EvalReport& r : res.reports) {
      out.push_back({n2, r.method, r.power, r.power_se, r.fp_rate, r.replicates});
    }
  }
  return out;
}

Matrix permutation_pvalues(const Matrix& observed, const std::vector<Matrix>& permuted) {
  Matrix exceed = Matrix::Zero(observed.rows(), observed.cols());
  for (const Matrix& stat : permuted) {
    if (stat.rows() != observed.rows() || stat.cols() != observed.cols()) {
      throw DimensionMismatch("permutation statistic has the wrong shape");
    }
    exceed += (stat.array().abs() >= observed.array().abs()).cast<double>().matrix();
  }
  const double total = static_cast<double>(permuted.size()) + 1.0;
  return ((exceed.array() + 1.0) / total).matrix();
}

PermutationResult permutation_test(const SampleMatrix& X1, const SampleMatrix& X2, Method method, int n_perms,
                                   std::uint64_t seed, const PipelineConfig& cfg, unsigned threads) {
  if (n_perms < 19) throw InvalidArgument("need at least 19 permutations");
  if (X1.p() != X2.p()) throw DimensionMismatch("datasets have different numbers of variables");
  PipelineConfig pc = cfg;
  pc.threads = 1;
  const TestStatMatrix observed = nodewise_stats(method, X1, X2, pc);

  Matrix pooled(X1.n() + X2.n(), X1.p());
  pooled << X1.data(), X2.data();
  std::vector<Matrix> permuted(static_cast<std::size_t>(n_perms));
  parallel_for(n_perms, threads, [&](Index k) {
    try {
      const auto [A, B] = permuted_split(pooled, X1.n(), derive_seed(seed, static_cast<std::uint64_t>(k)));
      permuted[static_cast<std::size_t>(k)] = nodewise_stats(method, A, B, pc).B;
    } catch (const Error& e) {
      throw Error(e.kind(), "permutation " + std::to_string(k) + ": " + e.what());
    }
  });

  PermutationResult out;
  out.method = method;
  out.observed = observed.B;
  out.parametric_pvals = observed.pvals;
  out.permutation_pvals = permutation_pvalues(observed.B, permuted);
  out.n_perms = n_perms;
  return out;
}

double permutation_margin(double perm_p, int n_perms) {
  const double n = static_cast<double>(n_perms);
  return 2.576 * std::sqrt(perm_p * (1.0 - perm_p) / n) + 1.0 / (n + 1.0);
}

PermutationCalibration calibrate_permutation(const PermutationResult& result, double alpha) {
  check_alpha(alpha);
  PermutationCalibration out;
  out.entries = result.permutation_pvals.size();
  if (out.entries == 0) throw EmptyInput("no permutation p-values");
  Index rejected = 0, fine = 0;
  for (Index i = 0; i < out.entries; ++i) {
    const double perm = result.permutation_pvals.data()[i];
    const double param = result.parametric_pvals.data()[i];
    rejected += perm <= alpha;
    fine += param >= perm - permutation_margin(perm, result.n_perms);
  }
  out.perm_rejection_rate = static_cast<double>(rejected) / static_cast<double>(out.entries);
  out.not_anticonservative = static_cast<double>(fine) / static_cast<double>(out.entries);
  return out;
}

double ks_distance_normal(std::vector<double> z) {
  if (z.empty()) throw EmptyInput("no statistics to compare");
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double F = normal_cdf(z[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

NullSummary summarize_null(const std::vector<double>& z) {
  if (z.empty()) throw EmptyInput("no null statistics");
  NullSummary out;
  out.count = static_cast<Index>(z.size());
  const auto tail = std::count_if(z.begin(), z.end(), [](double x) { return std::abs(x) > 1.96; });
  out.tail_fraction = static_cast<double>(tail) / static_cast<double>(z.size());
  out.ks_distance = ks_distance_normal(z);
  return out;
}

NullCalibration null_calibration(const HarnessConfig& cfg, Method method) {
  HarnessConfig hc = cfg;
  hc.scenario.diff_sparsity = 0.0;
  hc.methods = {method};
  hc.validate();
  if (hc.replicates < 1) throw EmptyInput("null calibration needs at least one replicate");
  const Scenario& sc = hc.scenario;
  std::vector<Matrix> per_replicate(static_cast<std::size_t>(hc.replicates));
  parallel_for(hc.replicates, hc.threads, [&](Index r) {
    try {
      const ReplicateSeeds seeds = replicate_seeds(hc.seed, static_cast<int>(r));
      const GgmPair truth = generate_ggm_pair(sc.p, sc.sparsity, 0.0, seeds.truth);
      const auto [X1, X2] = sample_dataset(truth, sc.n1, sc.n2, seeds.data);
      per_replicate[static_cast<std::size_t>(r)] = nodewise_stats(method, X1, X2, replicate_pipeline(hc, seeds)).B;
    } catch (...) {
      rethrow_with_replicate(static_cast<int>(r));
    }
  });
  NullCalibration out;
  out.method = method;
  for (const Matrix& B : per_replicate) {
    for (Index v = 0; v < B.rows(); ++v) {
      for (Index c = 0; c < B.cols(); ++c) out.z.push_back(B(v, c));
    }
  }
  out.summary = summarize_null(out.z);
  return out;
}

std::vector<double> fused_delta_norms(const HarnessConfig& cfg) {
  cfg.validate();
  const Scenario& sc = cfg.scenario;
  std::vector<double> out(static_cast<std::size_t>(cfg.replicates));
  parallel_for(cfg.replicates, cfg.threads, [&](Index r) {
    try {
      const ReplicateSeeds seeds = replicate_seeds(cfg.seed, static_cast<int>(r));
      const GgmPair truth = generate_ggm_pair(sc.p, sc.sparsity, sc.diff_sparsity, seeds.truth);
      const auto [X1, X2] = sample_dataset(truth, sc.n1, sc.n2, seeds.data);
      const NodewiseContext ctx(X1, X2, replicate_pipeline(cfg, seeds));
      double worst = 0.0;
      for (Index v = 0; v < sc.p; ++v) {
        const FusedNodeFit node = ctx.fused_node(v);
        const NodeTruth nt = node_truth(truth, v);
        worst = std::max(worst, empirical_delta(node.fit.beta1, node.fit.beta2, node.M.M1, node.M.M2,
                                                node.task1.gram, node.task2.gram, nt.beta1, nt.beta2));
      }
      out[static_cast<std::size_t>(r)] = worst;
    } catch (...) {
      rethrow_with_replicate(static_cast<int>(r));
    }
  });
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyInput("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace diffggm
