#include "diffggm/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace diffggm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSigma = 1e-6;
constexpr double kAlpha = 1.6;
constexpr double kRhoInit = 0.1;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;
constexpr int kCheckInterval = 10;
constexpr int kAdaptInterval = 50;
constexpr int kFirstPolish = 25;
constexpr double kInfeasTol = 1e-5;
constexpr int kInfeasStreak = 3;
constexpr int kRuizIterations = 10;

enum class RowKind { Free, Inequality, Equality };

RowKind classify(double lo, double hi) {
  if (lo == -kInf && hi == kInf) return RowKind::Free;
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(lo))) return RowKind::Equality;
  return RowKind::Inequality;
}

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double bound_violation(const Vector& ax, const Vector& lower, const Vector& upper) {
  double worst = 0.0;
  for (Index i = 0; i < ax.size(); ++i) {
    worst = std::max({worst, lower(i) - ax(i), ax(i) - upper(i)});
  }
  return worst;
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

void BoxConstrainedQp::validate() const {
  const Index d = Q.rows();
  if (Q.cols() != d) throw DimensionMismatch("Q must be square");
  if (A.cols() != d) throw DimensionMismatch("A must have as many columns as Q");
  if (lower.size() != A.rows() || upper.size() != A.rows()) {
    throw DimensionMismatch("bounds must have one entry per row of A");
  }
  if (!Q.allFinite() || !A.allFinite()) throw NonFiniteInput("QP matrices");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff())) {
    throw InvalidArgument("Q must be symmetric");
  }
  for (Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
      throw InvalidArgument("QP bounds must satisfy lower <= upper");
    }
  }
  if (d > 0) {
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(Q, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    if (min_eig < -1e-8) throw NonPsdCost(min_eig);
  }
}

struct PreparedQp::Impl {
  Matrix Q, A;    // original data
  Matrix Qs, As;  // equilibrated: Qs = c D Q D, As = E A D
  Vector D, E;
  double cost_scale = 1.0;
  SolverConfig cfg;
  Eigen::LLT<Matrix> base_factor;  // for all rows at kRhoInit

  Impl(Matrix q, Matrix a, const SolverConfig& c) : Q(std::move(q)), A(std::move(a)), cfg(c) {
    equilibrate();
    base_factor = factor(Vector::Constant(As.rows(), kRhoInit));
  }

  void equilibrate() {
    const Index n = Q.rows();
    const Index m = A.rows();
    D = Vector::Ones(n);
    E = Vector::Ones(m);
    Qs = Q;
    As = A;
    auto clamp_scale = [](double norm) {
      norm = std::clamp(norm, 1e-4, 1e4);
      return 1.0 / std::sqrt(norm);
    };
    for (int it = 0; it < kRuizIterations; ++it) {
      Vector dx(n), dz(m);
      for (Index j = 0; j < n; ++j) {
        double norm = n > 0 ? Qs.col(j).cwiseAbs().maxCoeff() : 0.0;
        if (m > 0) norm = std::max(norm, As.col(j).cwiseAbs().maxCoeff());
        dx(j) = norm > 0.0 ? clamp_scale(norm) : 1.0;
      }
      for (Index k = 0; k < m; ++k) {
        const double norm = As.row(k).cwiseAbs().maxCoeff();
        dz(k) = norm > 0.0 ? clamp_scale(norm) : 1.0;
      }
      Qs = dx.asDiagonal() * Qs * dx.asDiagonal();
      As = dz.asDiagonal() * As * dx.asDiagonal();
      D.array() *= dx.array();
      E.array() *= dz.array();
    }
    double mean_col = 0.0;
    for (Index j = 0; j < n; ++j) mean_col += Qs.col(j).cwiseAbs().maxCoeff();
    mean_col = n > 0 ? mean_col / static_cast<double>(n) : 1.0;
    cost_scale = mean_col > 0.0 ? std::clamp(1.0 / mean_col, 1e-4, 1e4) : 1.0;
    Qs *= cost_scale;
  }

  Eigen::LLT<Matrix> factor(const Vector& rho) const {
    Matrix K = Qs;
    K.diagonal().array() += kSigma;
    K.noalias() += As.transpose() * rho.asDiagonal() * As;
    Eigen::LLT<Matrix> llt(K);
    return llt;
  }

  // Solve the equality-constrained QP on a working set. Returns false when the
  // KKT system is inconsistent.
  bool solve_working_set(const std::vector<Index>& rows, const std::vector<double>& targets, Vector& x,
                         Vector& mult) const {
    const Index n = Q.rows();
    const Index k = static_cast<Index>(rows.size());
    Matrix kkt = Matrix::Zero(n + k, n + k);
    Vector rhs = Vector::Zero(n + k);
    kkt.topLeftCorner(n, n) = Q;
    for (Index r = 0; r < k; ++r) {
      kkt.block(n + r, 0, 1, n) = A.row(rows[r]);
      kkt.block(0, n + r, n, 1) = A.row(rows[r]).transpose();
      rhs(n + r) = targets[r];
    }
    // LU is several times cheaper; degenerate working sets fall back to a
    // rank-revealing least-squares solve.
    const double resid_tol = 1e-10 * std::max(1.0, inf_norm(rhs));
    Vector sol = kkt.partialPivLu().solve(rhs);
    if (!sol.allFinite() || inf_norm(kkt * sol - rhs) > resid_tol) {
      sol = kkt.completeOrthogonalDecomposition().solve(rhs);
      if (!sol.allFinite() || inf_norm(kkt * sol - rhs) > 1e3 * resid_tol) return false;
    }
    x = sol.head(n);
    mult = sol.tail(k);
    return true;
  }

  // Recover the exact solution starting from the active set suggested by
  // (x, y), then correct it with a few primal-dual active-set exchanges.
  bool polish(const Vector& x, const Vector& y, const Vector& lower, const Vector& upper,
              QpSolution& out) const {
    const Index m = A.rows();
    const Vector ax = A * x;
    std::vector<int> side(m, 2);  // 2 inactive, -1 lower, +1 upper, 0 equality
    for (Index i = 0; i < m; ++i) {
      const RowKind kind = classify(lower(i), upper(i));
      if (kind == RowKind::Equality) side[i] = 0;
      else if (lower(i) > -kInf && ax(i) - lower(i) < -y(i)) side[i] = -1;
      else if (upper(i) < kInf && upper(i) - ax(i) < y(i)) side[i] = 1;
    }

    double scale = 1.0;
    for (Index i = 0; i < m; ++i) {
      if (std::isfinite(lower(i))) scale = std::max(scale, std::abs(lower(i)));
      if (std::isfinite(upper(i))) scale = std::max(scale, std::abs(upper(i)));
    }
    const double tight = 1e-9 * scale;
    const int max_exchanges = 2 * static_cast<int>(m) + 10;
    for (int pass = 0; pass <= max_exchanges; ++pass) {
      std::vector<Index> rows;
      std::vector<double> targets;
      for (Index i = 0; i < m; ++i) {
        if (side[i] == 2) continue;
        rows.push_back(i);
        targets.push_back(side[i] > 0 ? upper(i) : lower(i));
      }
      Vector xp, mult;
      if (!solve_working_set(rows, targets, xp, mult)) return false;
      Vector yp = Vector::Zero(m);
      for (std::size_t r = 0; r < rows.size(); ++r) yp(rows[r]) = mult(static_cast<Index>(r));

      // Release the working row whose multiplier has the most wrong sign.
      const double dual_tol = 1e-9 * std::max(1.0, inf_norm(yp));
      Index drop = -1;
      double drop_amount = dual_tol;
      for (Index i : rows) {
        const double wrong = side[i] < 0 ? yp(i) : (side[i] > 0 ? -yp(i) : 0.0);
        if (wrong > drop_amount) {
          drop_amount = wrong;
          drop = i;
        }
      }
      if (drop >= 0) {
        side[drop] = 2;
        continue;
      }
      // Otherwise add the most violated bound.
      const Vector axp = A * xp;
      Index add = -1;
      double add_amount = tight;
      int add_side = 2;
      for (Index i = 0; i < m; ++i) {
        if (side[i] != 2) continue;
        if (lower(i) - axp(i) > add_amount) {
          add_amount = lower(i) - axp(i);
          add = i;
          add_side = -1;
        }
        if (axp(i) - upper(i) > add_amount) {
          add_amount = axp(i) - upper(i);
          add = i;
          add_side = 1;
        }
      }
      if (add >= 0) {
        side[add] = add_side;
        continue;
      }

      if (inf_norm(Q * xp + A.transpose() * yp) > 1e-9 * std::max(1.0, inf_norm(A.transpose() * yp))) {
        return false;
      }
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (std::abs(axp(rows[r]) - targets[r]) > tight) return false;
      }
      out.x = xp;
      out.dual = yp;
      out.polished = true;
      return true;
    }
    return false;
  }

  QpSolution solve(const Vector& lower, const Vector& upper) const {
    const Index n = Q.rows();
    const Index m = A.rows();
    if (lower.size() != m || upper.size() != m) throw DimensionMismatch("bounds must match rows of A");
    for (Index i = 0; i < m; ++i) {
      if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
        throw InvalidArgument("QP bounds must satisfy lower <= upper");
      }
    }

    QpSolution out;
    auto finish = [&](QpSolution& s) {
      s.objective = 0.5 * s.x.dot(Q * s.x);
      s.primal_infeasibility = m > 0 ? std::max(0.0, bound_violation(A * s.x, lower, upper)) : 0.0;
      if (s.status == QpStatus::Optimal && s.primal_infeasibility > kQpFeasTol) s.status = QpStatus::MaxIter;
      return s;
    };

    const Vector ls = E.cwiseProduct(lower);
    const Vector us = E.cwiseProduct(upper);
    double rho = kRhoInit;
    std::vector<RowKind> kinds(m);
    bool all_ineq = true;
    for (Index i = 0; i < m; ++i) {
      kinds[i] = classify(lower(i), upper(i));
      all_ineq = all_ineq && kinds[i] == RowKind::Inequality;
    }
    auto rho_vector = [&](double r) {
      Vector v(m);
      for (Index i = 0; i < m; ++i) {
        v(i) = kinds[i] == RowKind::Free ? kRhoMin : (kinds[i] == RowKind::Equality ? kRhoEqScale * r : r);
      }
      return v;
    };
    Vector rho_vec = rho_vector(rho);
    Eigen::LLT<Matrix> local_factor;
    const Eigen::LLT<Matrix>* fac = &base_factor;
    if (!all_ineq) {
      local_factor = factor(rho_vec);
      fac = &local_factor;
    }

    Vector x = Vector::Zero(n), z = Vector::Zero(m), y = Vector::Zero(m);
    Vector y_prev = y;
    const Vector Dinv = D.cwiseInverse();
    const Vector Einv = E.cwiseInverse();
    double tol = cfg.tol;
    int next_polish = kFirstPolish;
    int adapt_every = kAdaptInterval;
    int certificate_streak = 0;
    int next_adapt = kAdaptInterval;

    for (int it = 1; it <= cfg.max_iter; ++it) {
      y_prev = y;
      Vector rhs = kSigma * x;
      if (m > 0) rhs.noalias() += As.transpose() * (rho_vec.cwiseProduct(z) - y);
      const Vector xt = fac->solve(rhs);
      const Vector zt = As * xt;
      x = kAlpha * xt + (1.0 - kAlpha) * x;
      const Vector zr = kAlpha * zt + (1.0 - kAlpha) * z;
      Vector z_new = zr + y.cwiseQuotient(rho_vec);
      z_new = z_new.cwiseMax(ls).cwiseMin(us);
      y.noalias() += rho_vec.cwiseProduct(zr - z_new);
      z = z_new;
      out.iterations = it;

      const bool check = (it % kCheckInterval == 0) || it == cfg.max_iter || it == next_polish;
      if (!check) continue;

      const Vector ax_s = As * x;
      const Vector qx_s = Qs * x;
      const Vector aty_s = m > 0 ? Vector(As.transpose() * y) : Vector::Zero(n);
      const double ax_norm = inf_norm(Einv.cwiseProduct(ax_s));
      const double z_norm = inf_norm(Einv.cwiseProduct(z));
      const double prim = inf_norm(Einv.cwiseProduct(ax_s - z));
      const double qx_norm = inf_norm(Dinv.cwiseProduct(qx_s)) / cost_scale;
      const double aty_norm = inf_norm(Dinv.cwiseProduct(aty_s)) / cost_scale;
      const double dual = inf_norm(Dinv.cwiseProduct(qx_s + aty_s)) / cost_scale;
      const double eps_prim = tol + tol * std::max(ax_norm, z_norm);
      const double eps_dual = tol + tol * std::max(qx_norm, aty_norm);

      const Vector x_unscaled = D.cwiseProduct(x);
      const Vector y_unscaled = E.cwiseProduct(y) / cost_scale;

      if (prim <= eps_prim && dual <= eps_dual) {
        if (polish(x_unscaled, y_unscaled, lower, upper, out)) {
          out.status = QpStatus::Optimal;
          return finish(out);
        }
        // Scaled residuals can be small while the original bounds are still
        // missed by more than kQpFeasTol; tighten and keep iterating.
        if (bound_violation(A * x_unscaled, lower, upper) <= kQpFeasTol || tol < 1e-13) {
          out.x = x_unscaled;
          out.dual = y_unscaled;
          out.status = QpStatus::Optimal;
          return finish(out);
        }
        tol *= 0.1;
      }
      if (it == next_polish) {
        next_polish *= 2;
        if (polish(x_unscaled, y_unscaled, lower, upper, out)) {
          out.status = QpStatus::Optimal;
          return finish(out);
        }
      }

      // Primal infeasibility certificate on the dual increment. For any
      // feasible point v the support term is at least dy' A v, so the bound
      // must beat that value at the current iterate, and it must persist
      // across consecutive checks.
      bool certificate = false;
      if (m > 0) {
        const Vector dy = E.cwiseProduct(y - y_prev);
        const double dy_norm = inf_norm(dy);
        if (dy_norm > 1e-12) {
          const Vector at_dy_vec = Dinv.cwiseProduct(As.transpose() * (y - y_prev));
          if (inf_norm(at_dy_vec) <= kInfeasTol * dy_norm) {
            double support = 0.0;
            for (Index i = 0; i < m; ++i) {
              if (std::abs(dy(i)) <= kInfeasTol * dy_norm) continue;
              if (dy(i) > 0) support += upper(i) == kInf ? kInf : upper(i) * dy(i);
              else support += lower(i) == -kInf ? kInf : lower(i) * dy(i);
            }
            const double slack = std::abs(at_dy_vec.dot(x_unscaled));
            certificate = support < -kInfeasTol * dy_norm - slack;
          }
        }
      }
      certificate_streak = certificate ? certificate_streak + 1 : 0;
      if (certificate_streak >= kInfeasStreak) {
        out.x = x_unscaled;
        out.dual = y_unscaled;
        out.status = QpStatus::Infeasible;
        return finish(out);
      }

      if (m > 0 && it == next_adapt) {
        next_adapt += adapt_every;
        const double prim_rel = prim / std::max(std::max(ax_norm, z_norm), 1e-30);
        const double dual_rel = dual / std::max(std::max(qx_norm, aty_norm), 1e-30);
        double new_rho = rho * std::sqrt(prim_rel / std::max(dual_rel, 1e-30));
        new_rho = std::clamp(new_rho, kRhoMin, kRhoMax);
        if (new_rho > 5.0 * rho || new_rho < 0.2 * rho) {
          rho = new_rho;
          // Each change waits longer before the next one, so oscillating
          // updates settle on a fixed penalty and ADMM converges.
          adapt_every *= 2;
          rho_vec = rho_vector(rho);
          local_factor = factor(rho_vec);
          fac = &local_factor;
        }
      }
    }
    const Vector x_unscaled = D.cwiseProduct(x);
    const Vector y_unscaled = E.cwiseProduct(y) / cost_scale;
    if (polish(x_unscaled, y_unscaled, lower, upper, out)) {
      out.status = QpStatus::Optimal;
    } else {
      out.x = x_unscaled;
      out.dual = y_unscaled;
      out.status = QpStatus::MaxIter;
    }
    return finish(out);
  }
};

PreparedQp::PreparedQp(Matrix Q, Matrix A, const SolverConfig& cfg) {
  cfg.validate();
  if (Q.rows() != Q.cols() || A.cols() != Q.rows()) throw DimensionMismatch("PreparedQp: shape mismatch");
  impl_ = std::make_unique<Impl>(std::move(Q), std::move(A), cfg);
}
PreparedQp::~PreparedQp() = default;
PreparedQp::PreparedQp(PreparedQp&&) noexcept = default;
PreparedQp& PreparedQp::operator=(PreparedQp&&) noexcept = default;

QpSolution PreparedQp::solve(const Vector& lower, const Vector& upper) const {
  return impl_->solve(lower, upper);
}
Index PreparedQp::num_variables() const { return impl_->Q.rows(); }
Index PreparedQp::num_constraints() const { return impl_->A.rows(); }

QpSolution solve_qp(const BoxConstrainedQp& prob, const SolverConfig& cfg) {
  prob.validate();
  return PreparedQp(prob.Q, prob.A, cfg).solve(prob.lower, prob.upper);
}

double complementary_slackness(const Matrix& A, const Vector& lower, const Vector& upper,
                               const Vector& x, const Vector& dual) {
  const Vector ax = A * x;
  double worst = 0.0;
  for (Index i = 0; i < ax.size(); ++i) {
    double gap = 0.0;
    // A multiplier pushing against an infinite bound is itself the violation.
    if (dual(i) > 0) gap = upper(i) == kInf ? dual(i) : dual(i) * std::abs(upper(i) - ax(i));
    else if (dual(i) < 0) gap = lower(i) == -kInf ? -dual(i) : -dual(i) * std::abs(ax(i) - lower(i));
    worst = std::max(worst, gap);
  }
  return worst;
}

}  // namespace diffggm
