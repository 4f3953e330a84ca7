#include "diffggm/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace diffggm {

namespace {

constexpr double kStandardizedTol = 1e-10;

void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw NonFiniteInput(where);
}

bool columns_standardized(const Matrix& X) {
  if (X.rows() == 0) return false;
  const double n = static_cast<double>(X.rows());
  for (Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).sum() / n;
    const double second = X.col(j).squaredNorm() / n;
    if (std::abs(mean) > kStandardizedTol || std::abs(second - 1.0) > kStandardizedTol) return false;
  }
  return true;
}

}  // namespace

SampleMatrix SampleMatrix::standardize(const Matrix& raw) {
  if (raw.rows() < 2) throw InvalidArgument("standardize needs at least two samples");
  require_finite(raw, "data matrix");
  const double n = static_cast<double>(raw.rows());
  Matrix out(raw.rows(), raw.cols());
  for (Index j = 0; j < raw.cols(); ++j) {
    const double mean = raw.col(j).sum() / n;
    out.col(j) = raw.col(j).array() - mean;
    const double rms = std::sqrt(out.col(j).squaredNorm() / n);
    const double scale = std::max(1.0, raw.col(j).cwiseAbs().maxCoeff());
    if (!(rms > 1e-13 * scale)) throw ConstantColumn(j);
    out.col(j) /= rms;
  }
  return SampleMatrix(std::move(out), true);
}

SampleMatrix SampleMatrix::wrap(Matrix data) {
  require_finite(data, "data matrix");
  const bool std_ok = columns_standardized(data);
  return SampleMatrix(std::move(data), std_ok);
}

EmpiricalCovariance covariance(const SampleMatrix& X) {
  if (!X.standardized()) throw InvalidArgument("covariance requires a standardized sample matrix");
  EmpiricalCovariance cov;
  cov.n = X.n();
  cov.sigma_hat.noalias() = X.data().transpose() * X.data();
  cov.sigma_hat /= static_cast<double>(X.n());
  // Exact symmetry; the product is symmetric up to rounding only.
  cov.sigma_hat = 0.5 * (cov.sigma_hat + cov.sigma_hat.transpose()).eval();
  return cov;
}

Matrix principal_without(const Matrix& sigma, Index v) {
  const Index p = sigma.rows();
  Matrix out(p - 1, p - 1);
  for (Index j = 0, jj = 0; j < p; ++j) {
    if (j == v) continue;
    for (Index i = 0, ii = 0; i < p; ++i) {
      if (i == v) continue;
      out(ii++, jj) = sigma(i, j);
    }
    ++jj;
  }
  return out;
}

Vector column_without(const Matrix& sigma, Index v) {
  const Index p = sigma.rows();
  Vector out(p - 1);
  for (Index i = 0, ii = 0; i < p; ++i) {
    if (i != v) out(ii++) = sigma(i, v);
  }
  return out;
}

Matrix drop_column(const Matrix& X, Index v) {
  Matrix out(X.rows(), X.cols() - 1);
  for (Index j = 0, jj = 0; j < X.cols(); ++j) {
    if (j != v) out.col(jj++) = X.col(j);
  }
  return out;
}

std::vector<double> default_k_grid() {
  std::vector<double> grid(10);
  for (int i = 0; i < 10; ++i) grid[i] = std::pow(10.0, -1.0 + 3.0 * i / 9.0);
  return grid;
}

void RegularizationParams::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InvalidArgument("penalties must be nonnegative");
  if (k_grid.empty()) throw InvalidArgument("k grid must be nonempty");
  for (double k : k_grid) {
    if (!(k > 0.0) || !std::isfinite(k)) throw InvalidArgument("k grid entries must be positive");
  }
  if (cv_folds < 2) throw InvalidArgument("cv_folds must be at least 2");
}

void SolverConfig::validate() const {
  if (max_iter < 1) throw InvalidArgument("max_iter must be >= 1");
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
}

GramProblem make_gram(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw DimensionMismatch("design has " + std::to_string(X.rows()) +
                                                    " rows but response has " + std::to_string(y.size()));
  require_finite(y, "response");
  GramProblem g;
  const double n = static_cast<double>(X.rows());
  g.n = X.rows();
  g.gram.noalias() = X.transpose() * X;
  g.gram /= n;
  g.gram = 0.5 * (g.gram + g.gram.transpose()).eval();
  g.xty.noalias() = X.transpose() * y;
  g.xty /= n;
  g.yty = y.squaredNorm() / n;
  return g;
}

GramProblem node_gram(const Matrix& second_moment, Index v, Index n) {
  GramProblem g;
  g.gram = principal_without(second_moment, v);
  g.xty = column_without(second_moment, v);
  g.yty = second_moment(v, v);
  g.n = n;
  return g;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over a combination of both words
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void parallel_for(Index count, unsigned threads, const std::function<void(Index)>& body) {
  if (count <= 0) return;
  const unsigned workers = static_cast<unsigned>(
      std::min<Index>(count, std::max(1u, threads)));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double two_sided_pvalue(double z) {
  if (std::isinf(z)) return 0.0;
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("normal_quantile needs prob in (0,1)");
  // Acklam's rational approximation followed by one Halley step on erfc.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    const double q = std::sqrt(-2 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (prob <= 1 - plow) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = normal_cdf(x) - prob;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

}  // namespace diffggm
