#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <utility>
#include <vector>

#include "diffggm/debias.hpp"
#include "diffggm/eval.hpp"
#include "diffggm/fused_lasso.hpp"
#include "diffggm/ggm.hpp"
#include "diffggm/lasso.hpp"
#include "diffggm/qp.hpp"
#include "diffggm/simulate.hpp"

namespace py = pybind11;
using namespace diffggm;

namespace {

using Release = py::call_guard<py::gil_scoped_release>;

SolverConfig solver(int max_iter, double tol, std::uint64_t seed = 0) { return SolverConfig{max_iter, tol, seed}; }

PipelineConfig pipeline(std::uint64_t seed, unsigned threads, const std::vector<double>& k_grid) {
  PipelineConfig cfg;
  cfg.solver.seed = seed;
  cfg.threads = threads;
  if (!k_grid.empty()) cfg.reg.k_grid = k_grid;
  cfg.validate();
  return cfg;
}

std::vector<Method> methods_of(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const std::string& n : names) out.push_back(method_from_string(n));
  return out;
}

HarnessConfig harness(Index p, Index n1, Index n2, double sparsity, double diff_sparsity, int replicates,
                      double alpha, std::uint64_t seed, const std::vector<std::string>& methods, unsigned threads) {
  HarnessConfig cfg;
  cfg.scenario = Scenario{p, n1, n2, sparsity, diff_sparsity};
  cfg.methods = methods_of(methods);
  cfg.replicates = replicates;
  cfg.alpha = alpha;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.validate();
  return cfg;
}

py::list edge_list(const std::vector<Edge>& edges) {
  py::list out;
  for (const Edge& e : edges) out.append(py::make_tuple(e.i, e.j));
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["method"] = to_string(r.method);
  d["fp_rate"] = r.fp_rate;
  d["power"] = r.power;
  d["coverage_S"] = r.coverage_S;
  d["coverage_Sdc"] = r.coverage_Sdc;
  d["len_S"] = r.len_S;
  d["len_Sdc"] = r.len_Sdc;
  d["fp_se"] = r.fp_se;
  d["power_se"] = r.power_se;
  d["replicates"] = r.replicates;
  return d;
}

}  // namespace

PYBIND11_MODULE(_diffggm, m) {
  m.doc() = "Debiased lasso and fused-lasso tests for differential network edges.";

  // Exception hierarchy mirrors the C++ error kinds.
  const py::object base = py::reinterpret_steal<py::object>(
      PyErr_NewException("diffggm._diffggm.DiffggmError", PyExc_RuntimeError, nullptr));
  m.attr("DiffggmError") = base;
  for (const char* name : {"UsageError", "DataError", "NumericalError"}) {
    m.attr(name) = py::reinterpret_steal<py::object>(
        PyErr_NewException(("diffggm._diffggm." + std::string(name)).c_str(), base.ptr(), nullptr));
  }
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const char* name = e.kind() == ErrorKind::Usage  ? "UsageError"
                         : e.kind() == ErrorKind::Data ? "DataError"
                                                       : "NumericalError";
      const py::object type = py::module_::import("diffggm._diffggm").attr(name);
      PyErr_SetString(type.ptr(), e.what());
    }
  });

  m.def("standardize", [](const Matrix& raw) { return SampleMatrix::standardize(raw).data(); }, py::arg("raw"),
        "Center each column and scale it to unit root-mean-square.");

  py::class_<LassoFit>(m, "LassoFit")
      .def_readonly("beta", &LassoFit::beta)
      .def_readonly("k_hat", &LassoFit::k_hat)
      .def_readonly("lam", &LassoFit::lambda)
      .def_readonly("objective", &LassoFit::objective)
      .def_readonly("iterations", &LassoFit::iterations)
      .def_readonly("converged", &LassoFit::converged)
      .def_readonly("kkt_residual", &LassoFit::kkt_residual);

  m.def(
      "solve_lasso",
      [](const Matrix& X, const Vector& y, double lam, int max_iter, double tol) {
        return solve_lasso(SampleMatrix::wrap(X), y, lam, solver(max_iter, tol));
      },
      py::arg("X"), py::arg("y"), py::arg("lam"), py::arg("max_iter") = 50000, py::arg("tol") = 1e-9, Release(),
      "Coordinate descent for (1/2n)||y - X b||^2 + lam ||b||_1.");

  py::class_<FusedFit>(m, "FusedFit")
      .def_readonly("beta1", &FusedFit::beta1)
      .def_readonly("beta2", &FusedFit::beta2)
      .def_readonly("k1", &FusedFit::k1)
      .def_readonly("k2", &FusedFit::k2)
      .def_readonly("objective", &FusedFit::objective)
      .def_readonly("iterations", &FusedFit::iterations)
      .def_readonly("converged", &FusedFit::converged)
      .def_readonly("kkt_residual", &FusedFit::kkt_residual);

  m.def(
      "solve_fused",
      [](const Matrix& X1, const Vector& y1, const Matrix& X2, const Vector& y2, double lambda1, double lambda2,
         int max_iter, double tol) {
        RegularizationParams reg;
        reg.lambda1 = lambda1;
        reg.lambda2 = lambda2;
        return solve_fused(SampleMatrix::wrap(X1), y1, SampleMatrix::wrap(X2), y2, reg, solver(max_iter, tol));
      },
      py::arg("X1"), py::arg("y1"), py::arg("X2"), py::arg("y2"), py::arg("lambda1"), py::arg("lambda2"),
      py::arg("max_iter") = 50000, py::arg("tol") = 1e-9, Release(), "Two-task fused lasso.");

  py::class_<QpSolution>(m, "QpSolution")
      .def_readonly("x", &QpSolution::x)
      .def_readonly("dual", &QpSolution::dual)
      .def_readonly("objective", &QpSolution::objective)
      .def_readonly("primal_infeasibility", &QpSolution::primal_infeasibility)
      .def_readonly("iterations", &QpSolution::iterations)
      .def_readonly("polished", &QpSolution::polished)
      .def_property_readonly("status", [](const QpSolution& s) { return std::string(to_string(s.status)); });

  m.def(
      "solve_qp",
      [](const Matrix& Q, const Matrix& A, const Vector& lower, const Vector& upper, int max_iter, double tol) {
        return solve_qp(BoxConstrainedQp{Q, A, lower, upper}, solver(max_iter, tol));
      },
      py::arg("Q"), py::arg("A"), py::arg("lower"), py::arg("upper"), py::arg("max_iter") = 50000,
      py::arg("tol") = 1e-9, Release(), "minimize 1/2 x'Qx subject to lower <= Ax <= upper.");

  py::class_<DebiasMatrices>(m, "DebiasMatrices")
      .def_readonly("M1", &DebiasMatrices::M1)
      .def_readonly("M2", &DebiasMatrices::M2)
      .def_readonly("mu1", &DebiasMatrices::mu1)
      .def_readonly("mu2", &DebiasMatrices::mu2)
      .def_readonly("feasible", &DebiasMatrices::feasible)
      .def_readonly("relaxations", &DebiasMatrices::relaxations);

  m.def(
      "estimate_m_single",
      [](const Matrix& sigma, double mu) { return estimate_m_single(sigma, mu, solver(50000, 1e-7)); },
      py::arg("sigma"), py::arg("mu"), Release());
  m.def(
      "estimate_m_joint",
      [](const Matrix& sigma1, const Matrix& sigma2, Index n1, Index n2, double mu1, double mu2) {
        return estimate_m_joint(sigma1, sigma2, n1, n2, mu1, mu2, solver(50000, 1e-7));
      },
      py::arg("sigma1"), py::arg("sigma2"), py::arg("n1"), py::arg("n2"), py::arg("mu1"), py::arg("mu2"),
      Release());

  py::class_<GgmPair>(m, "GgmPair")
      .def_readonly("theta1", &GgmPair::theta1)
      .def_readonly("theta2", &GgmPair::theta2)
      .def_readonly("seed", &GgmPair::seed)
      .def_property_readonly("S1", [](const GgmPair& g) { return edge_list(g.S1); })
      .def_property_readonly("S2", [](const GgmPair& g) { return edge_list(g.S2); })
      .def_property_readonly("Sd", [](const GgmPair& g) { return edge_list(g.Sd); });

  m.def("generate_ggm_pair", &generate_ggm_pair, py::arg("p"), py::arg("sparsity"), py::arg("diff_sparsity"),
        py::arg("seed"));
  m.def(
      "sample_dataset",
      [](const GgmPair& truth, Index n1, Index n2, std::uint64_t seed) {
        auto [X1, X2] = sample_dataset(truth, n1, n2, seed);
        return std::make_pair(X1.data(), X2.data());
      },
      py::arg("truth"), py::arg("n1"), py::arg("n2"), py::arg("seed"), "Standardized samples of both models.");

  py::class_<TestStatMatrix>(m, "TestStatMatrix")
      .def_readonly("z", &TestStatMatrix::B)
      .def_readonly("pvalues", &TestStatMatrix::pvals)
      .def_readonly("estimate", &TestStatMatrix::estimate)
      .def_readonly("stderr", &TestStatMatrix::stderr_d)
      .def_property_readonly("method", [](const TestStatMatrix& s) { return std::string(to_string(s.method)); });

  m.def(
      "nodewise_stats",
      [](const Matrix& X1, const Matrix& X2, const std::string& method, std::uint64_t seed, unsigned threads,
         const std::vector<double>& k_grid) {
        return nodewise_stats(method_from_string(method), SampleMatrix::standardize(X1),
                              SampleMatrix::standardize(X2), pipeline(seed, threads, k_grid));
      },
      py::arg("X1"), py::arg("X2"), py::arg("method") = "fused", py::arg("seed") = 0, py::arg("threads") = 1,
      py::arg("k_grid") = std::vector<double>{}, Release(),
      "Edge-difference z-statistics; rows of X1, X2 are samples and are standardized first.");

  m.def(
      "select_edges",
      [](const Matrix& pvals, double alpha, const std::string& correction) {
        return select_edges(pvals, alpha, correction_from_string(correction));
      },
      py::arg("pvalues"), py::arg("alpha") = 0.05, py::arg("correction") = "none");

  m.def(
      "benchmark",
      [](Index p, Index n1, Index n2, double sparsity, double diff_sparsity, int replicates, double alpha,
         std::uint64_t seed, const std::vector<std::string>& methods, unsigned threads) {
        const HarnessConfig cfg =
            harness(p, n1, n2, sparsity, diff_sparsity, replicates, alpha, seed, methods, threads);
        BenchmarkResult r;
        {
          py::gil_scoped_release release;
          r = run_benchmark(cfg);
        }
        py::list out;
        for (const EvalReport& e : r.reports) out.append(report_dict(e));
        return out;
      },
      py::arg("p") = 75, py::arg("n1") = 800, py::arg("n2") = 60, py::arg("sparsity") = 0.19,
      py::arg("diff_sparsity") = 0.03, py::arg("replicates") = 50, py::arg("alpha") = 0.05, py::arg("seed") = 0,
      py::arg("methods") = std::vector<std::string>{"lasso", "fused"}, py::arg("threads") = 1,
      "Monte-Carlo false-positive rate, power, coverage and interval length per method.");

  m.def(
      "power_curve",
      [](const std::vector<Index>& n2_grid, Index p, Index n1, double sparsity, double diff_sparsity,
         int replicates, double alpha, std::uint64_t seed, const std::vector<std::string>& methods,
         unsigned threads) {
        const HarnessConfig cfg =
            harness(p, n1, n2_grid.empty() ? 60 : n2_grid.front(), sparsity, diff_sparsity, replicates, alpha,
                    seed, methods, threads);
        std::vector<PowerPoint> pts;
        {
          py::gil_scoped_release release;
          pts = power_curve(cfg, n2_grid);
        }
        py::list out;
        for (const PowerPoint& pt : pts) {
          py::dict d;
          d["n2"] = pt.n2;
          d["method"] = to_string(pt.method);
          d["power"] = pt.power;
          d["power_se"] = pt.power_se;
          d["fp_rate"] = pt.fp_rate;
          d["replicates"] = pt.replicates;
          out.append(d);
        }
        return out;
      },
      py::arg("n2_grid"), py::arg("p") = 75, py::arg("n1") = 800, py::arg("sparsity") = 0.19,
      py::arg("diff_sparsity") = 0.03, py::arg("replicates") = 20, py::arg("alpha") = 0.05, py::arg("seed") = 0,
      py::arg("methods") = std::vector<std::string>{"lasso", "fused"}, py::arg("threads") = 1);

  py::class_<PermutationResult>(m, "PermutationResult")
      .def_readonly("observed", &PermutationResult::observed)
      .def_readonly("parametric_pvalues", &PermutationResult::parametric_pvals)
      .def_readonly("permutation_pvalues", &PermutationResult::permutation_pvals)
      .def_readonly("n_perms", &PermutationResult::n_perms)
      .def_property_readonly("method", [](const PermutationResult& r) { return std::string(to_string(r.method)); });

  m.def(
      "permutation_test",
      [](const Matrix& X1, const Matrix& X2, const std::string& method, int n_perms, std::uint64_t seed,
         unsigned threads) {
        return permutation_test(SampleMatrix::standardize(X1), SampleMatrix::standardize(X2),
                                method_from_string(method), n_perms, derive_seed(seed, 4),
                                pipeline(seed, threads, {}), threads);
      },
      py::arg("X1"), py::arg("X2"), py::arg("method") = "fused", py::arg("n_perms") = 199, py::arg("seed") = 0,
      py::arg("threads") = 1, Release());

  m.def(
      "null_calibration",
      [](const std::string& method, Index p, Index n1, Index n2, double sparsity, int replicates,
         std::uint64_t seed, unsigned threads) {
        const HarnessConfig cfg =
            harness(p, n1, n2, sparsity, 0.0, replicates, 0.05, seed, {method}, threads);
        NullCalibration cal;
        {
          py::gil_scoped_release release;
          cal = null_calibration(cfg, method_from_string(method));
        }
        py::dict d;
        d["z"] = cal.z;
        d["count"] = cal.summary.count;
        d["tail_fraction"] = cal.summary.tail_fraction;
        d["ks_distance"] = cal.summary.ks_distance;
        return d;
      },
      py::arg("method") = "fused", py::arg("p") = 40, py::arg("n1") = 800, py::arg("n2") = 60,
      py::arg("sparsity") = 0.19, py::arg("replicates") = 4, py::arg("seed") = 0, py::arg("threads") = 1);

  m.attr("__version__") = DIFFGGM_VERSION;
}
