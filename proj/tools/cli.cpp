#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <variant>

#include "CLI11.hpp"
#include "diffggm/eval.hpp"
#include "diffggm/ggm.hpp"
#include "diffggm/simulate.hpp"
#include "json.hpp"
#include "table_io.hpp"

namespace diffggm::cli {

namespace {

using nlohmann::json;

struct Options {
  std::string input_a, input_b, output_dir, config;
  std::string method = "both";
  double alpha = 0.05;
  std::string correction = "none";
  std::uint64_t seed = 0;
  int replicates = 0;  // command-specific default
  std::vector<std::int64_t> n2_grid{20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150};
  std::int64_t p = 75, n1 = 800, n2 = 60;
  double sparsity = 0.19;
  double diff_sparsity = 0.03;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<double> k_grid = default_k_grid();
  double bounds_c = 2.0, bounds_a = 2.0, bounds_m = 0.01;
  int bounds_sd = 2, bounds_s12 = 15;
};

using Target = std::variant<std::string*, double*, std::uint64_t*, int*, unsigned*, std::int64_t*,
                            std::vector<std::int64_t>*, std::vector<double>*>;

struct OptionSpec {
  std::string name;  // flag without leading dashes, also the config key
  std::string help;
  Target target;
  bool replayed = true;  // recorded in the manifest
};

std::vector<OptionSpec> option_table(Options& o, const std::string& command) {
  std::vector<OptionSpec> all{
      {"input-a", "first group data file (rows = samples)", &o.input_a},
      {"input-b", "second group data file", &o.input_b},
      {"output-dir", "directory for result files", &o.output_dir, false},
      {"method", "lasso, fused or both", &o.method},
      {"alpha", "test level", &o.alpha},
      {"correction", "none or bh", &o.correction},
      {"seed", "master seed", &o.seed},
      {"replicates", "Monte-Carlo replicates (permutations for permute)", &o.replicates},
      {"n2-grid", "comma-separated second-group sample sizes", &o.n2_grid},
      {"p", "number of variables", &o.p},
      {"n1", "first group sample size", &o.n1},
      {"n2", "second group sample size", &o.n2},
      {"sparsity", "edge density of each graph", &o.sparsity},
      {"diff-sparsity", "edge density of the difference", &o.diff_sparsity},
      {"threads", "worker threads", &o.threads, false},
      {"k-grid", "comma-separated penalty multipliers for cross-validation", &o.k_grid},
      {"bounds-c", "bias budget constant c", &o.bounds_c},
      {"bounds-a", "bias budget constant a", &o.bounds_a},
      {"bounds-sd", "assumed difference sparsity s_d", &o.bounds_sd},
      {"bounds-s12", "assumed shared sparsity s_12", &o.bounds_s12},
      {"bounds-m", "bias budget exponent m", &o.bounds_m},
  };
  std::vector<std::string> names;
  const std::vector<std::string> pipeline{"method", "alpha", "seed", "threads", "k-grid", "bounds-c",
                                          "bounds-a", "bounds-sd", "bounds-s12", "bounds-m", "output-dir"};
  const std::vector<std::string> scenario{"p", "n1", "n2", "sparsity", "diff-sparsity"};
  if (command == "simulate") {
    names = scenario;
    names.insert(names.end(), {"seed", "output-dir"});
  } else if (command == "test") {
    names = pipeline;
    names.insert(names.end(), {"input-a", "input-b", "correction"});
  } else if (command == "benchmark") {
    names = pipeline;
    names.insert(names.end(), scenario.begin(), scenario.end());
    names.push_back("replicates");
  } else if (command == "power-curve") {
    names = pipeline;
    names.insert(names.end(), {"p", "n1", "sparsity", "diff-sparsity", "replicates", "n2-grid"});
  } else if (command == "permute") {
    names = pipeline;
    names.insert(names.end(), scenario.begin(), scenario.end());
    names.insert(names.end(), {"input-a", "input-b", "replicates"});
  }
  std::vector<OptionSpec> out;
  for (const OptionSpec& spec : all) {
    if (std::find(names.begin(), names.end(), spec.name) != names.end()) out.push_back(spec);
  }
  return out;
}

[[noreturn]] void usage_error(const std::string& what) { throw Error(ErrorKind::Usage, what); }

template <typename T>
T integer_from(const json& v, const std::string& key) {
  if (!v.is_number_integer()) usage_error("config key '" + key + "' must be an integer");
  if constexpr (std::is_unsigned_v<T>) {
    if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
    if (v.get<std::int64_t>() < 0) usage_error("config key '" + key + "' must be non-negative");
    return static_cast<T>(v.get<std::int64_t>());
  } else {
    return static_cast<T>(v.get<std::int64_t>());
  }
}

double number_from(const json& v, const std::string& key) {
  if (!v.is_number()) usage_error("config key '" + key + "' must be a number");
  return v.get<double>();
}

template <typename T>
std::vector<T> list_from(const json& v, const std::string& key) {
  std::vector<T> out;
  if (v.is_string()) {
    std::stringstream ss(v.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        const double x = std::stod(item, &used);
        if constexpr (std::is_integral_v<T>) {
          if (x != std::floor(x)) throw std::invalid_argument(item);
        }
        out.push_back(static_cast<T>(x));
      } catch (const std::exception&) {
        usage_error("config key '" + key + "' has a malformed entry '" + item + "'");
      }
    }
    return out;
  }
  if (!v.is_array()) usage_error("config key '" + key + "' must be an array or comma-separated string");
  for (const json& item : v) {
    if constexpr (std::is_integral_v<T>) out.push_back(integer_from<T>(item, key));
    else out.push_back(number_from(item, key));
  }
  return out;
}

void assign(const OptionSpec& spec, const json& v) {
  const std::string& key = spec.name;
  std::visit(
      [&](auto* target) {
        using T = std::remove_pointer_t<decltype(target)>;
        if constexpr (std::is_same_v<T, std::string>) {
          if (!v.is_string()) usage_error("config key '" + key + "' must be a string");
          *target = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, double>) {
          *target = number_from(v, key);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          *target = list_from<double>(v, key);
        } else if constexpr (std::is_same_v<T, std::vector<std::int64_t>>) {
          *target = list_from<std::int64_t>(v, key);
        } else {
          *target = integer_from<T>(v, key);
        }
      },
      spec.target);
}

json to_json(const OptionSpec& spec) {
  return std::visit([](auto* target) { return json(*target); }, spec.target);
}

void apply_config(const std::string& path, const std::string& command, const std::vector<OptionSpec>& specs) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    usage_error(path + ": invalid JSON: " + e.what());
  } catch (const Error& e) {
    usage_error(e.what());
  }
  if (!doc.is_object()) usage_error(path + ": config must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key == "command") {
      if (!it->is_string() || it->get<std::string>() != command) {
        usage_error(path + ": config is for command " + it->dump() + ", not '" + command + "'");
      }
      continue;
    }
    if (key == "version") continue;
    auto spec = std::find_if(specs.begin(), specs.end(), [&](const OptionSpec& s) { return s.name == key; });
    if (spec == specs.end()) usage_error(path + ": unknown key '" + key + "' for command '" + command + "'");
    assign(*spec, *it);
  }
}

json manifest(const std::string& command, const std::vector<OptionSpec>& specs) {
  json m;
  m["command"] = command;
  m["version"] = DIFFGGM_VERSION;
  for (const OptionSpec& spec : specs) {
    if (spec.replayed) m[spec.name] = to_json(spec);
  }
  return m;
}

// ---------------------------------------------------------------- validation

std::vector<Method> methods_of(const std::string& name) {
  if (name == "both") return {Method::DebiasedLasso, Method::DebiasedFused};
  if (name == "lasso" || name == "fused") return {method_from_string(name)};
  usage_error("--method must be lasso, fused or both, not '" + name + "'");
}

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig cfg;
  cfg.solver.seed = o.seed;
  cfg.reg.k_grid = o.k_grid;
  cfg.bounds = BiasBoundsConfig{o.bounds_c, o.bounds_a, o.bounds_sd, o.bounds_s12, o.bounds_m};
  cfg.threads = o.threads;
  cfg.validate();
  return cfg;
}

Scenario scenario_of(const Options& o) {
  Scenario sc{o.p, o.n1, o.n2, o.sparsity, o.diff_sparsity};
  sc.validate();
  return sc;
}

void check_common(const Options& o) {
  if (o.output_dir.empty()) usage_error("--output-dir is required");
  if (o.threads < 1) usage_error("--threads must be at least 1");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) usage_error("--alpha must lie in (0, 1)");
}

HarnessConfig harness_config(const Options& o) {
  HarnessConfig hc;
  hc.scenario = scenario_of(o);
  hc.pipeline = pipeline_config(o);
  hc.methods = methods_of(o.method);
  hc.replicates = o.replicates;
  hc.alpha = o.alpha;
  hc.seed = o.seed;
  hc.threads = o.threads;
  if (o.replicates < 1) usage_error("--replicates must be at least 1");
  hc.validate();
  return hc;
}

// ------------------------------------------------------------------- output

struct OutputDir {
  std::filesystem::path root;

  explicit OutputDir(const std::string& dir) : root(dir) {
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw Error(ErrorKind::Data, dir + ": cannot create output directory: " + ec.message());
  }
  void write(const std::string& name, const std::string& text) const { write_text((root / name).string(), text); }
  void write_json(const std::string& name, const json& doc) const { write(name, doc.dump(2) + "\n"); }
};

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json edges_json(const std::vector<Edge>& edges) {
  json out = json::array();
  for (const Edge& e : edges) out.push_back({e.i, e.j});
  return out;
}

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

std::string percent(double value) { return std::isnan(value) ? "   n/a" : fmt("%6.1f", 100.0 * value); }

std::string nan_aware(double value) { return std::isnan(value) ? "nan" : format_double(value); }

std::vector<std::string> default_names(Index p) {
  std::vector<std::string> names;
  for (Index j = 0; j < p; ++j) names.push_back("V" + std::to_string(j));
  return names;
}

// ------------------------------------------------------------------ commands

int cmd_simulate(const Options& o, const json& man, std::ostream& out) {
  if (o.output_dir.empty()) usage_error("--output-dir is required");
  const Scenario sc = scenario_of(o);
  const ReplicateSeeds seeds = replicate_seeds(o.seed, 0);
  const GgmPair truth = generate_ggm_pair(sc.p, sc.sparsity, sc.diff_sparsity, seeds.truth);
  const auto [X1, X2] = sample_dataset(truth, sc.n1, sc.n2, seeds.data);

  const OutputDir dir(o.output_dir);
  const std::vector<std::string> header = default_names(sc.p);
  dir.write("group_a.csv", format_table(X1.data(), header));
  dir.write("group_b.csv", format_table(X2.data(), header));
  json t;
  t["p"] = sc.p;
  t["n1"] = sc.n1;
  t["n2"] = sc.n2;
  t["sparsity"] = sc.sparsity;
  t["diff_sparsity"] = sc.diff_sparsity;
  t["seed"] = o.seed;
  t["truth_seed"] = seeds.truth;
  t["data_seed"] = seeds.data;
  t["S1"] = edges_json(truth.S1);
  t["S2"] = edges_json(truth.S2);
  t["Sd"] = edges_json(truth.Sd);
  t["theta1"] = matrix_json(truth.theta1);
  t["theta2"] = matrix_json(truth.theta2);
  dir.write_json("truth.json", t);
  dir.write_json("manifest.json", man);

  std::ostringstream s;
  s << "simulated pair of Gaussian graphical models\n"
    << "  variables        " << sc.p << "\n"
    << "  samples (a, b)   " << sc.n1 << ", " << sc.n2 << "\n"
    << "  edges (a, b)     " << truth.S1.size() << ", " << truth.S2.size() << "\n"
    << "  differing edges  " << truth.Sd.size() << "\n"
    << "  seed             " << o.seed << "\n";
  dir.write("summary.txt", s.str());
  out << s.str();
  return kExitOk;
}

SampleMatrix load_group(const std::string& path, Table& table) {
  table = read_table(path);
  try {
    return SampleMatrix::standardize(table.values);
  } catch (const ConstantColumn& e) {
    throw Error(ErrorKind::Data, path + ": column '" + table.names[static_cast<std::size_t>(e.column())] +
                                     "' has zero variance");
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

int cmd_test(const Options& o, const json& man, std::ostream& out, std::ostream& err) {
  check_common(o);
  if (o.input_a.empty() || o.input_b.empty()) usage_error("--input-a and --input-b are required");
  const std::vector<Method> methods = methods_of(o.method);
  const Correction correction = correction_from_string(o.correction);
  const PipelineConfig cfg = pipeline_config(o);

  // Parse and validate both inputs before any fitting.
  Table ta, tb;
  const SampleMatrix X1 = load_group(o.input_a, ta);
  const SampleMatrix X2 = load_group(o.input_b, tb);
  if (X1.p() != X2.p()) {
    throw DimensionMismatch("inputs have different column counts: " + std::to_string(X1.p()) + " in " +
                            o.input_a + ", " + std::to_string(X2.p()) + " in " + o.input_b);
  }
  if (X1.p() < 2) throw Error(ErrorKind::Data, "inputs need at least two columns");
  if (ta.had_header && tb.had_header && ta.names != tb.names) {
    err << "warning: column names differ between inputs; using those of " << o.input_a << "\n";
  }
  const std::vector<std::string>& names = ta.had_header ? ta.names : tb.names;
  const Index p = X1.p();

  const OutputDir dir(o.output_dir);
  json report;
  report["command"] = "test";
  report["p"] = p;
  report["n1"] = X1.n();
  report["n2"] = X2.n();
  report["alpha"] = o.alpha;
  report["correction"] = to_string(correction);
  report["variables"] = names;
  std::ostringstream s;
  s << "differential network test\n"
    << "  variables " << p << ", samples " << X1.n() << " and " << X2.n() << "\n"
    << "  alpha " << o.alpha << ", correction " << to_string(correction) << "\n";

  for (Method m : methods) {
    const std::string tag = to_string(m);
    const TestStatMatrix stats = nodewise_stats(m, X1, X2, cfg);
    const BoolMatrix selected = select_edges(stats, o.alpha, correction);
    dir.write(tag + "_z.csv", format_table(stats.B));
    dir.write(tag + "_pvalues.csv", format_table(stats.pvals));

    std::string list = "row,column,row_name,column_name,z,pvalue,correction\n";
    json sel = json::array();
    for (Index v = 0; v < p; ++v) {
      for (Index c = 0; c < p - 1; ++c) {
        if (!selected(v, c)) continue;
        const Index j = column_node(v, c);
        const std::string& rn = names[static_cast<std::size_t>(v)];
        const std::string& cn = names[static_cast<std::size_t>(j)];
        list += std::to_string(v) + "," + std::to_string(j) + "," + rn + "," + cn + "," +
                format_double(stats.B(v, c)) + "," + format_double(stats.pvals(v, c)) + "," +
                to_string(correction) + "\n";
        sel.push_back({{"row", v}, {"column", j}, {"z", stats.B(v, c)}, {"pvalue", stats.pvals(v, c)}});
      }
    }
    dir.write(tag + "_selected.csv", list);

    json nodes = json::array();
    for (const NodeDiagnostics& d : stats.nodes) {
      nodes.push_back({{"noise1", d.noise1},
                       {"noise2", d.noise2},
                       {"lambda1", d.lambda1},
                       {"lambda2", d.lambda2},
                       {"mu1", d.mu1},
                       {"mu2", d.mu2},
                       {"relaxations", d.relaxations}});
    }
    json r;
    r["selected_count"] = sel.size();
    r["selected"] = sel;
    r["nodes"] = nodes;
    r["z"] = matrix_json(stats.B);
    r["pvalues"] = matrix_json(stats.pvals);
    report["methods"][tag] = r;

    s << "\n" << tag << ": " << sel.size() << " of " << p * (p - 1) << " entries selected\n";
    std::size_t shown = 0;
    for (const json& e : sel) {
      if (shown++ == 20) {
        s << "  ...\n";
        break;
      }
      char line[256];
      std::snprintf(line, sizeof line, "  %-16s %-16s z = %8.3f  p = %.3g\n",
                    names[e["row"].get<std::size_t>()].c_str(), names[e["column"].get<std::size_t>()].c_str(),
                    e["z"].get<double>(), e["pvalue"].get<double>());
      s << line;
    }
  }
  dir.write_json("report.json", report);
  dir.write("summary.txt", s.str());
  dir.write_json("manifest.json", man);
  out << s.str();
  return kExitOk;
}

std::string benchmark_table(const std::vector<EvalReport>& reports) {
  std::ostringstream s;
  s << "method      FP%   power%   cov S%  cov Sdc%    len S  len Sdc  replicates\n";
  for (const EvalReport& r : reports) {
    char line[160];
    std::snprintf(line, sizeof line, "%-7s %s   %s   %s    %s  %7.3f  %7.3f  %10d\n", to_string(r.method),
                  percent(r.fp_rate).c_str(), percent(r.power).c_str(), percent(r.coverage_S).c_str(),
                  percent(r.coverage_Sdc).c_str(), r.len_S, r.len_Sdc, r.replicates);
    s << line;
  }
  return s.str();
}

json report_json(const EvalReport& r) {
  return {{"method", to_string(r.method)}, {"fp_rate", r.fp_rate},           {"power", r.power},
          {"coverage_S", r.coverage_S},    {"coverage_Sdc", r.coverage_Sdc}, {"len_S", r.len_S},
          {"len_Sdc", r.len_Sdc},          {"fp_se", r.fp_se},               {"power_se", r.power_se},
          {"replicates", r.replicates}};
}

int cmd_benchmark(const Options& o, const json& man, std::ostream& out) {
  check_common(o);
  const HarnessConfig hc = harness_config(o);
  const OutputDir dir(o.output_dir);
  const BenchmarkResult result = run_benchmark(hc);

  std::string table = "method,replicates,fp_rate,power,coverage_S,coverage_Sdc,len_S,len_Sdc,fp_se,power_se\n";
  json reports = json::array();
  for (const EvalReport& r : result.reports) {
    table += std::string(to_string(r.method)) + "," + std::to_string(r.replicates) + "," + nan_aware(r.fp_rate) +
             "," + nan_aware(r.power) + "," + nan_aware(r.coverage_S) + "," + nan_aware(r.coverage_Sdc) + "," +
             nan_aware(r.len_S) + "," + nan_aware(r.len_Sdc) + "," + nan_aware(r.fp_se) + "," +
             nan_aware(r.power_se) + "\n";
    reports.push_back(report_json(r));
  }
  std::string reps = "replicate,method,fp_rate,power,coverage_S,coverage_Sdc,len_S,len_Sdc\n";
  json records = json::array();
  for (const ReplicateRecord& rec : result.records) {
    for (const MethodOutcome& mo : rec.outcomes) {
      reps += std::to_string(rec.index) + "," + to_string(mo.method) + "," + nan_aware(mo.edges.fp_rate) + "," +
              nan_aware(mo.edges.power) + "," + nan_aware(mo.coverage.coverage_S) + "," +
              nan_aware(mo.coverage.coverage_Sdc) + "," + nan_aware(mo.coverage.len_S) + "," +
              nan_aware(mo.coverage.len_Sdc) + "\n";
    }
    records.push_back({{"replicate", rec.index},
                       {"truth_seed", rec.seeds.truth},
                       {"data_seed", rec.seeds.data},
                       {"pipeline_seed", rec.seeds.pipeline}});
  }
  dir.write("benchmark.csv", table);
  dir.write("replicates.csv", reps);
  dir.write_json("report.json", {{"command", "benchmark"},
                                 {"alpha", hc.alpha},
                                 {"p", hc.scenario.p},
                                 {"n1", hc.scenario.n1},
                                 {"n2", hc.scenario.n2},
                                 {"reports", reports},
                                 {"replicate_seeds", records}});
  std::ostringstream s;
  s << "benchmark: p = " << hc.scenario.p << ", n1 = " << hc.scenario.n1 << ", n2 = " << hc.scenario.n2
    << ", alpha = " << hc.alpha << ", uncorrected per-entry tests\n\n"
    << benchmark_table(result.reports);
  dir.write("summary.txt", s.str());
  dir.write_json("manifest.json", man);
  out << s.str();
  return kExitOk;
}

int cmd_power_curve(const Options& o, const json& man, std::ostream& out) {
  check_common(o);
  Options base = o;
  if (o.n2_grid.empty()) usage_error("--n2-grid must not be empty");
  base.n2 = *std::min_element(o.n2_grid.begin(), o.n2_grid.end());
  const HarnessConfig hc = harness_config(base);
  std::vector<Index> grid;
  for (std::int64_t n : o.n2_grid) {
    if (n < hc.pipeline.reg.cv_folds || n < 2) usage_error("--n2-grid entries must be at least the CV fold count");
    grid.push_back(static_cast<Index>(n));
  }
  const OutputDir dir(o.output_dir);
  const std::vector<PowerPoint> points = power_curve(hc, grid);

  std::string longform = "n2,method,power,power_se,fp_rate,replicates\n";
  json series = json::array();
  for (const PowerPoint& pt : points) {
    longform += std::to_string(pt.n2) + "," + to_string(pt.method) + "," + format_double(pt.power) + "," +
                format_double(pt.power_se) + "," + format_double(pt.fp_rate) + "," + std::to_string(pt.replicates) +
                "\n";
    series.push_back({{"n2", pt.n2},
                      {"method", to_string(pt.method)},
                      {"power", pt.power},
                      {"power_se", pt.power_se},
                      {"fp_rate", pt.fp_rate},
                      {"replicates", pt.replicates}});
  }
  // One row per n2 with a power and standard-error column per method.
  std::string wide = "n2";
  for (Method m : hc.methods) wide += std::string(",") + to_string(m) + "_power," + to_string(m) + "_power_se";
  wide += "\n";
  std::ostringstream s;
  s << "power curve: p = " << hc.scenario.p << ", n1 = " << hc.scenario.n1 << ", alpha = " << hc.alpha << ", "
    << hc.replicates << " replicates per point\n\n    n2";
  for (Method m : hc.methods) {
    char head[32];
    std::snprintf(head, sizeof head, "  %8s%%", to_string(m));
    s << head;
  }
  s << "\n";
  for (Index n : grid) {
    wide += std::to_string(n);
    s << fmt("%6.0f", static_cast<double>(n));
    for (Method m : hc.methods) {
      for (const PowerPoint& pt : points) {
        if (pt.n2 != n || pt.method != m) continue;
        wide += "," + format_double(pt.power) + "," + format_double(pt.power_se);
        s << "  " << fmt("%8.1f", 100.0 * pt.power) << " ";
      }
    }
    wide += "\n";
    s << "\n";
  }
  dir.write("power_curve.csv", longform);
  dir.write("power_curve_wide.csv", wide);
  dir.write_json("report.json", {{"command", "power-curve"}, {"alpha", hc.alpha}, {"series", series}});
  dir.write("summary.txt", s.str());
  dir.write_json("manifest.json", man);
  out << s.str();
  return kExitOk;
}

int cmd_permute(const Options& o, const json& man, std::ostream& out) {
  check_common(o);
  const std::vector<Method> methods = methods_of(o.method);
  const PipelineConfig cfg = pipeline_config(o);
  if (o.replicates < 19) usage_error("--replicates (permutation count) must be at least 19 for permute");
  if (o.input_a.empty() != o.input_b.empty()) usage_error("give both --input-a and --input-b, or neither");

  std::optional<SampleMatrix> X1, X2;
  std::string source;
  if (!o.input_a.empty()) {
    Table ta, tb;
    X1 = load_group(o.input_a, ta);
    X2 = load_group(o.input_b, tb);
    if (X1->p() != X2->p()) throw DimensionMismatch("inputs have different column counts");
    source = "files";
  } else {
    const Scenario sc = scenario_of(o);
    const ReplicateSeeds seeds = replicate_seeds(o.seed, 0);
    const GgmPair truth = generate_ggm_pair(sc.p, sc.sparsity, sc.diff_sparsity, seeds.truth);
    auto data = sample_dataset(truth, sc.n1, sc.n2, seeds.data);
    X1 = std::move(data.first);
    X2 = std::move(data.second);
    source = "simulated";
  }
  const OutputDir dir(o.output_dir);
  json report;
  report["command"] = "permute";
  report["data"] = source;
  report["permutations"] = o.replicates;
  report["alpha"] = o.alpha;
  std::ostringstream s;
  s << "permutation calibration: " << o.replicates << " permutations, " << source << " data, p = " << X1->p()
    << "\n";
  for (Method m : methods) {
    const std::string tag = to_string(m);
    const PermutationResult r = permutation_test(*X1, *X2, m, o.replicates, derive_seed(o.seed, 4), cfg, o.threads);
    const PermutationCalibration cal = calibrate_permutation(r, o.alpha);
    std::string pairs = "row,column,z,parametric_p,permutation_p\n";
    for (Index v = 0; v < r.observed.rows(); ++v) {
      for (Index c = 0; c < r.observed.cols(); ++c) {
        pairs += std::to_string(v) + "," + std::to_string(column_node(v, c)) + "," +
                 format_double(r.observed(v, c)) + "," + format_double(r.parametric_pvals(v, c)) + "," +
                 format_double(r.permutation_pvals(v, c)) + "\n";
      }
    }
    dir.write("permutation_" + tag + ".csv", pairs);
    report["methods"][tag] = {{"entries", cal.entries},
                              {"permutation_rejection_rate", cal.perm_rejection_rate},
                              {"not_anticonservative_fraction", cal.not_anticonservative}};
    s << "  " << tag << ": permutation p <= " << o.alpha << " for " << fmt("%.1f", 100.0 * cal.perm_rejection_rate)
      << "% of entries, parametric p not anti-conservative for " << fmt("%.1f", 100.0 * cal.not_anticonservative)
      << "%\n";
  }
  dir.write_json("report.json", report);
  dir.write("summary.txt", s.str());
  dir.write_json("manifest.json", man);
  out << s.str();
  return kExitOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return kExitUsage;
    case ErrorKind::Data: return kExitData;
    case ErrorKind::Numerical: return kExitNumerical;
  }
  return kExitNumerical;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> commands{"simulate", "test", "benchmark", "power-curve", "permute"};
  CLI::App app{"Differential network testing for Gaussian graphical models", "diffggm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DIFFGGM_VERSION));

  // One option set per subcommand, all bound to per-command storage.
  std::vector<std::unique_ptr<Options>> storage;
  std::vector<std::vector<OptionSpec>> tables;
  std::vector<CLI::App*> subs;
  const std::vector<std::string> help{"generate a GGM pair and datasets", "test two datasets for edge differences",
                                      "Monte-Carlo benchmark of the methods", "power as a function of n2",
                                      "permutation calibration of the p-values"};
  for (std::size_t k = 0; k < commands.size(); ++k) {
    storage.push_back(std::make_unique<Options>());
    Options& o = *storage.back();
    if (commands[k] == "benchmark") o.replicates = 50;
    if (commands[k] == "power-curve") o.replicates = 20;
    if (commands[k] == "permute") {
      o.replicates = 199;
      o.diff_sparsity = 0.0;
    }
    CLI::App* sub = app.add_subcommand(commands[k], help[k]);
    tables.push_back(option_table(o, commands[k]));
    for (const OptionSpec& spec : tables.back()) {
      std::visit(
          [&](auto* target) {
            CLI::Option* opt = sub->add_option("--" + spec.name, *target, spec.help)->capture_default_str();
            using T = std::remove_pointer_t<decltype(target)>;
            if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<std::int64_t>>) {
              opt->delimiter(',');
            }
          },
          spec.target);
    }
    sub->add_option("--config", o.config, "JSON file keyed by flag names; its values override flags");
    subs.push_back(sub);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    // Help and version requests are parse "errors" with a zero exit code.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (std::size_t k = 0; k < commands.size(); ++k) {
      if (!subs[k]->parsed()) continue;
      Options& o = *storage[k];
      const std::string& command = commands[k];
      if (!o.config.empty()) apply_config(o.config, command, tables[k]);
      const json man = manifest(command, tables[k]);
      if (command == "simulate") return cmd_simulate(o, man, out);
      if (command == "test") return cmd_test(o, man, out, err);
      if (command == "benchmark") return cmd_benchmark(o, man, out);
      if (command == "power-curve") return cmd_power_curve(o, man, out);
      return cmd_permute(o, man, out);
    }
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace diffggm::cli
