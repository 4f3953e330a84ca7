#pragma once

#include <cstdint>
#include <vector>

#include "diffggm/core.hpp"
#include "diffggm/ggm.hpp"
#include "diffggm/simulate.hpp"

namespace diffggm {

/// Uncorrected per-entry rejection rates at level alpha.
struct EdgeMetrics {
  double fp_rate = 0.0;
  double power = 0.0;
  Index diff_entries = 0;  // entries (v, j) with {v, j} in Sd
  Index null_entries = 0;
};

/// Entries of a P x (P-1) matrix whose edge lies in Sd are the true differences.
EdgeMetrics edge_metrics(const TestStatMatrix& stats, const GgmPair& truth, double alpha);

/**
 * Confidence-interval coverage and mean length, split by difference support.
 * The reference is the standardized node regression difference, matching the
 * standardized data the pipeline sees. Fields of an empty set are NaN.
 */
struct CoverageLength {
  double coverage_S = 0.0;
  double coverage_Sdc = 0.0;
  double len_S = 0.0;
  double len_Sdc = 0.0;
  Index diff_entries = 0;
  Index null_entries = 0;
};

CoverageLength coverage_length(const TestStatMatrix& stats, const GgmPair& truth, double alpha);

/// Simulation scenario; defaults are the p = 75, n1 = 800, n2 = 60 setting.
struct Scenario {
  Index p = 75;
  Index n1 = 800;
  Index n2 = 60;
  double sparsity = 0.19;
  double diff_sparsity = 0.03;

  void validate() const;
};

struct HarnessConfig {
  Scenario scenario;
  PipelineConfig pipeline;  // its threads field is ignored; replicates are the parallel unit
  std::vector<Method> methods{Method::DebiasedLasso, Method::DebiasedFused};
  int replicates = 50;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

/// Seeds of replicate r. The truth and data streams do not depend on n2,
/// so runs that differ only in n2 share their ground truth.
struct ReplicateSeeds {
  std::uint64_t truth = 0;
  std::uint64_t data = 0;
  std::uint64_t pipeline = 0;
};

ReplicateSeeds replicate_seeds(std::uint64_t seed, int replicate);

struct MethodOutcome {
  Method method = Method::DebiasedLasso;
  EdgeMetrics edges;
  CoverageLength coverage;
};

struct ReplicateRecord {
  int index = 0;
  ReplicateSeeds seeds;
  std::vector<MethodOutcome> outcomes;  // same order as HarnessConfig::methods
};

/// Replicate means; *_se are standard errors of those means.
struct EvalReport {
  Method method = Method::DebiasedLasso;
  double fp_rate = 0.0;
  double power = 0.0;
  double coverage_S = 0.0;
  double coverage_Sdc = 0.0;
  double len_S = 0.0;
  double len_Sdc = 0.0;
  double fp_se = 0.0;
  double power_se = 0.0;
  int replicates = 0;
};

struct BenchmarkResult {
  std::vector<EvalReport> reports;  // one per method
  std::vector<ReplicateRecord> records;
};

/// Monte-Carlo replicates of simulate -> nodewise tests -> metrics.
/// Failures are rethrown with the replicate index in the message.
BenchmarkResult run_benchmark(const HarnessConfig& cfg);

/// Means over replicates, skipping NaN coverage fields of empty sets.
std::vector<EvalReport> aggregate(const std::vector<ReplicateRecord>& records, const std::vector<Method>& methods);

struct PowerPoint {
  Index n2 = 0;
  Method method = Method::DebiasedLasso;
  double power = 0.0;
  double power_se = 0.0;
  double fp_rate = 0.0;
  int replicates = 0;
};

/// One benchmark per n2 value with cfg.scenario.n2 replaced, same seed.
std::vector<PowerPoint> power_curve(const HarnessConfig& cfg, const std::vector<Index>& n2_grid);

struct PermutationResult {
  Method method = Method::DebiasedLasso;
  Matrix observed;          // observed z-statistics
  Matrix parametric_pvals;  // their normal-theory p-values
  Matrix permutation_pvals;
  int n_perms = 0;
};

/**
 * Re-split the pooled rows into groups of the original sizes n_perms times,
 * re-standardize each group and recompute the statistic. Entry p-value is
 * (1 + #{|perm| >= |observed|}) / (n_perms + 1).
 */
PermutationResult permutation_test(const SampleMatrix& X1, const SampleMatrix& X2, Method method, int n_perms,
                                   std::uint64_t seed, const PipelineConfig& cfg, unsigned threads = 1);

/// Add-one permutation p-values from observed statistics and per-permutation statistics.
Matrix permutation_pvalues(const Matrix& observed, const std::vector<Matrix>& permuted);

struct PermutationCalibration {
  double perm_rejection_rate = 0.0;    // fraction of entries with permutation p <= alpha
  double not_anticonservative = 0.0;  // fraction with parametric p >= permutation p - margin
  Index entries = 0;
};

/// Margin for comparing a parametric p against a permutation p estimated from
/// n_perms draws: 2.576 binomial standard errors plus one grid step.
double permutation_margin(double perm_p, int n_perms);

PermutationCalibration calibrate_permutation(const PermutationResult& result, double alpha);

struct NullSummary {
  Index count = 0;
  double tail_fraction = 0.0;  // fraction with |z| > 1.96
  double ks_distance = 0.0;    // sup |F_n - Phi|
};

/// Throws EmptyInput on an empty sample.
NullSummary summarize_null(const std::vector<double>& z);

/// Kolmogorov-Smirnov distance between the empirical CDF of z and N(0, 1).
double ks_distance_normal(std::vector<double> z);

struct NullCalibration {
  Method method = Method::DebiasedLasso;
  std::vector<double> z;  // pooled over replicates, replicate-major, row-major
  NullSummary summary;
};

/// Replicates with identical models (diff_sparsity forced to 0); throws
/// EmptyInput when cfg.replicates is 0.
NullCalibration null_calibration(const HarnessConfig& cfg, Method method);

/// Per-replicate max over nodes of the realized bias ||Delta||_inf of the
/// fused pipeline, measured against the standardized truth.
std::vector<double> fused_delta_norms(const HarnessConfig& cfg);

double median(std::vector<double> values);

}  // namespace diffggm
