// tws: generate instances, solve, verify and benchmark from the command line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tws/tws.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitFailedCheck = 1;
constexpr int kExitError = 2;
constexpr std::size_t kExportCap = 256;

json error_json(const std::exception& e) {
  json err = {{"kind", "error"}, {"message", e.what()}};
  if (const auto* te = dynamic_cast<const tws::Error*>(&e)) err["kind"] = te->kind();
  if (const auto* pe = dynamic_cast<const tws::PrecisionEnvelopeError*>(&e))
    err["min_epsilon"] = pe->min_epsilon();
  if (const auto* pe = dynamic_cast<const tws::ParseError*>(&e)) err["line"] = pe->line();
  if (const auto* fe = dynamic_cast<const tws::FactorizationError*>(&e)) err["pivot"] = fe->pivot();
  if (const auto* ce = dynamic_cast<const tws::ConvergenceError*>(&e)) {
    err["iterations"] = ce->report().iterations;
    err["final_gap"] = ce->report().final_gap;
  }
  return json{{"error", err}};
}

json check_json(const tws::Check& c) {
  return {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"bound", c.bound}};
}

double percentile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct Inputs {
  std::string cost_path, r_path, c_path;
  std::optional<double> epsilon;
  std::optional<double> epsilon_rel;
};

struct Loaded {
  tws::SparseMatrix cost;
  tws::Vector r, c;
};

Loaded load(const Inputs& in, bool symmetric) {
  Loaded l;
  l.cost = tws::load_matrix_market(in.cost_path);
  l.r = tws::load_marginal(in.r_path);
  l.c = in.c_path.empty() ? l.r : tws::load_marginal(in.c_path);
  if (symmetric && !in.c_path.empty() && l.c != l.r)
    throw tws::ValidationError("--symmetric needs c equal to r");
  tws::validate_instance({l.cost, l.r, l.c, std::nullopt, 0, {}});
  return l;
}

// Explicit --epsilon wins; --epsilon-rel scales by ||C||_inf; with neither,
// 0.25 ||C||_inf raised to the precision-envelope minimum.
double resolve_epsilon(const Inputs& in, const tws::SparseMatrix& cost) {
  const double c_inf = cost.max_abs();
  if (in.epsilon) return *in.epsilon;
  if (in.epsilon_rel) return *in.epsilon_rel * (c_inf > 0 ? c_inf : 1.0);
  const double base = 0.25 * (c_inf > 0 ? c_inf : 1.0);
  if (cost.n_rows() < 2) return base;
  return std::max(base, tws::min_feasible_epsilon(c_inf, cost.n_rows()));
}

void add_input_options(CLI::App* cmd, Inputs& in, bool need_c) {
  cmd->add_option("--cost", in.cost_path, "Cost matrix (Matrix Market)")->required();
  cmd->add_option("--r", in.r_path, "Row marginal file")->required();
  auto* c = cmd->add_option("--c", in.c_path, "Column marginal file");
  if (need_c) c->required();
  auto* e = cmd->add_option("--epsilon", in.epsilon, "Absolute accuracy");
  cmd->add_option("--epsilon-rel", in.epsilon_rel, "Accuracy relative to max |C_ij|")->excludes(e);
}

int cmd_gen(const tws::InstanceSpec& spec, const std::string& out_dir) {
  const tws::ProblemInstance inst = tws::generate_instance(spec);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  tws::store_matrix_market(dir / "cost.mtx", inst.cost);
  tws::store_marginal(dir / "r.txt", inst.r);
  tws::store_marginal(dir / "c.txt", inst.c);
  const auto g = tws::support_graph_of(inst.cost);
  json out = {{"family", inst.family},
              {"n", inst.n()},
              {"seed", inst.seed},
              {"edges", g.edge_count()},
              {"nnz", inst.cost.nnz()},
              {"off_diagonal_nnz", 2 * g.edge_count()},
              {"files",
               {{"cost", (dir / "cost.mtx").string()},
                {"r", (dir / "r.txt").string()},
                {"c", (dir / "c.txt").string()}}}};
  if (inst.declared_treewidth) out["declared_treewidth"] = *inst.declared_treewidth;
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct SolveFlags {
  bool symmetric = false;
  bool dense_reference = false;
  bool verify = false;
  std::string export_plan;
  bool traces = false;
};

int cmd_solve(const Inputs& in, const SolveFlags& f) {
  using clock = std::chrono::steady_clock;
  const Loaded l = load(in, f.symmetric);
  const std::size_t n = l.cost.n_rows();
  const double eps = resolve_epsilon(in, l.cost);

  // Iterates are only kept when the dense reference needs them.
  std::vector<std::pair<tws::Vector, tws::Vector>> iterates;
  tws::SinkhornOptions opt;
  if (f.dense_reference && !f.symmetric && n <= tws::kDenseCap)
    opt.observer = [&](const tws::SinkhornState& s) { iterates.emplace_back(s.u, s.v); };

  const auto t0 = clock::now();
  const tws::OtSolution sol =
      f.symmetric ? tws::approx_ot_symmetric(l.cost, l.r, eps, opt) : tws::approx_ot(l.cost, l.r, l.c, eps, opt);
  const double total = std::chrono::duration<double>(clock::now() - t0).count();
  const auto& rep = sol.sinkhorn_report;
  const tws::PlanMarginals pm = tws::plan_marginals(sol.plan);

  std::vector<tws::Check> checks;
  checks.push_back(tws::make_check("row_feasibility", tws::l1_distance(pm.row, l.r), 1e-9));
  checks.push_back(tws::make_check("col_feasibility", tws::l1_distance(pm.col, l.c), 1e-9));
  if (sol.mode == tws::DriverMode::sinkhorn)
    checks.push_back(tws::make_check("iteration_bound", static_cast<double>(rep.iterations),
                                     rep.iteration_bound));

  double iter_sum = 0.0;
  for (double t : rep.wallclock_per_iter) iter_sum += t;
  json report;
  report["instance"] = {{"n", n}, {"nnz", l.cost.nnz()}, {"c_inf_norm", l.cost.max_abs()},
                        {"cost_path", in.cost_path}};
  report["parameters"] = {{"epsilon", eps},       {"gamma", sol.gamma},
                          {"eps0", sol.eps0},     {"mode", tws::to_string(sol.mode)},
                          {"symmetric", f.symmetric}};
  report["results"] = {{"cost", sol.cost},
                       {"degenerate", sol.degenerate},
                       {"iterations", rep.iterations},
                       {"R", rep.R},
                       {"iteration_bound", rep.iteration_bound},
                       {"sinkhorn_tolerance", rep.eps0},
                       {"final_gap", rep.final_gap},
                       {"correction_active", sol.plan.correction_active},
                       {"max_cancellation", rep.max_cancellation},
                       {"cancellation_warnings", rep.cancellation_warnings}};
  report["timings"] = {
      {"total_s", total},
      {"init_s", std::max(0.0, total - iter_sum)},
      {"per_iteration_s",
       {{"mean", rep.wallclock_per_iter.empty() ? 0.0 : iter_sum / static_cast<double>(rep.wallclock_per_iter.size())},
        {"p50", percentile(rep.wallclock_per_iter, 0.5)},
        {"p90", percentile(rep.wallclock_per_iter, 0.9)},
        {"p99", percentile(rep.wallclock_per_iter, 0.99)}}}};
  if (f.traces) {
    report["traces"] = {{"psi", rep.psi_trace},
                        {"kl", rep.kl_trace},
                        {"row_gap", rep.row_gap_trace},
                        {"col_gap", rep.col_gap_trace}};
  }

  if (f.verify) {
    const auto ex = tws::exact_ot(l.cost, l.r, l.c);
    const bool cert = tws::verify_dual_certificate(l.cost, l.r, l.c, ex.cost, ex.cert);
    const auto opt_check = tws::make_check("epsilon_optimality", sol.cost - ex.cost, eps + 1e-8);
    checks.push_back({"dual_certificate", cert, cert ? 0.0 : 1.0, 0.0, {}});
    checks.push_back(opt_check);
    report["verification"] = {{"oracle_cost", ex.cost},
                              {"gap_to_oracle", sol.cost - ex.cost},
                              {"certificate_valid", cert},
                              {"pivots", ex.pivots},
                              {"row_residual", tws::l1_distance(pm.row, l.r)},
                              {"col_residual", tws::l1_distance(pm.col, l.c)}};
  }

  if (f.dense_reference) {
    json dr;
    if (f.symmetric || sol.mode != tws::DriverMode::sinkhorn || n > tws::kDenseCap) {
      dr["skipped"] = true;
    } else {
      double worst = 0.0;
      std::size_t compared = 0;
      const auto dense = tws::dense_sinkhorn(
          l.cost, sol.gamma, sol.r_tilde, sol.c_tilde, rep.eps0, rep.max_iter,
          [&](std::size_t k, std::span<const double> u, std::span<const double> v) {
            if (k >= iterates.size()) return;
            const auto& [ui, vi] = iterates[k];
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += u[i] - ui[i];
            s /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i)
              worst = std::max({worst, std::abs(ui[i] + s - u[i]), std::abs(vi[i] - s - v[i])});
            ++compared;
          });
      const bool same_k = dense.k == rep.iterations;
      checks.push_back(tws::make_check("dense_equivalence", worst, 1e-10));
      checks.push_back({"dense_iteration_count", same_k, static_cast<double>(dense.k),
                        static_cast<double>(rep.iterations), {}});
      dr = {{"iterations", dense.k}, {"compared_iterates", compared}, {"max_abs_deviation", worst}};
    }
    report["dense_reference"] = dr;
  }

  if (!f.export_plan.empty()) {
    tws::check_dense_cap(n, kExportCap);
    const tws::DenseMatrix g = tws::plan_to_dense(sol.plan, kExportCap);
    std::vector<tws::Triplet> t;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (g(i, j) != 0.0) t.push_back({i, j, g(i, j)});
    tws::store_matrix_market(f.export_plan, tws::SparseMatrix::from_triplets(t, n, n));
    report["plan_path"] = f.export_plan;
  }

  bool ok = true;
  json cj = json::array();
  for (const auto& c : checks) {
    cj.push_back(check_json(c));
    ok = ok && c.passed;
  }
  report["checks"] = cj;
  report["passed"] = ok;
  std::cout << report.dump(2) << '\n';
  return ok ? 0 : kExitFailedCheck;
}

int cmd_verify(const Inputs& in, bool symmetric) {
  const Loaded l = load(in, symmetric);
  const double eps = resolve_epsilon(in, l.cost);
  tws::VerifyOptions opt;
  opt.symmetric = symmetric;
  const auto rep = tws::verify_instance(l.cost, l.r, l.c, eps, opt);
  std::printf("instance n=%zu nnz=%zu epsilon=%.6g mode=%s\n", l.cost.n_rows(), l.cost.nnz(), eps,
              tws::to_string(rep.solution.mode).c_str());
  for (const auto& c : rep.checks)
    std::printf("%s %-20s value=%.6e bound=%.6e\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                c.value, c.bound);
  const bool ok = rep.all_passed();
  std::printf("%s\n", ok ? "all checks passed" : "some checks failed");
  return ok ? 0 : kExitFailedCheck;
}

int cmd_bench(tws::BenchOptions opt, const std::string& out_csv) {
  const tws::BenchResult res = tws::run_bench(opt);
  if (out_csv.empty() || out_csv == "-") {
    tws::write_bench_csv(std::cout, res);
    return 0;
  }
  std::ofstream os(out_csv);
  if (!os) throw tws::Error("cannot write '" + out_csv + "'");
  tws::write_bench_csv(os, res);

  // Summary: medians per size and log-log slopes.
  json sizes = json::array();
  std::vector<double> xi, yi, xd, yd;
  for (std::size_t n : opt.sizes) {
    std::vector<double> imp, den;
    for (const auto& r : res.rows) {
      if (r.n != n) continue;
      if (r.per_iter_ns_implicit) imp.push_back(*r.per_iter_ns_implicit);
      if (r.per_iter_ns_dense) den.push_back(*r.per_iter_ns_dense);
    }
    if (imp.empty() && den.empty()) continue;
    json s = {{"n", n}};
    if (!imp.empty()) {
      s["median_ns_implicit"] = tws::median(imp);
      xi.push_back(static_cast<double>(n));
      yi.push_back(tws::median(imp));
    }
    if (!den.empty()) {
      s["median_ns_dense"] = tws::median(den);
      xd.push_back(static_cast<double>(n));
      yd.push_back(tws::median(den));
    }
    sizes.push_back(s);
  }
  json summary = {{"csv", out_csv}, {"sizes", sizes}, {"truncated", res.truncated}};
  if (xi.size() >= 2) summary["slope_implicit"] = tws::loglog_slope(xi, yi);
  if (xd.size() >= 2) summary["slope_dense"] = tws::loglog_slope(xd, yd);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treewidth-sparse Sinkhorn for approximate optimal transport"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a cost matrix and two marginals");
  tws::InstanceSpec spec;
  std::string family = "path", gen_out;
  gen->add_option("--family", family, "path | grid | tau_tree")->required();
  gen->add_option("--n", spec.n, "Number of points");
  gen->add_option("--tau", spec.tau, "Treewidth (tau_tree) or grid width");
  gen->add_option("--width", spec.width, "Grid width");
  gen->add_option("--height", spec.height, "Grid height");
  gen->add_option("--seed", spec.seed, "Random seed");
  gen->add_option("--weight-low", spec.weight_low, "Smallest edge cost");
  gen->add_option("--weight-high", spec.weight_high, "Largest edge cost");
  gen->add_option("--diag", spec.diag_value, "Diagonal cost");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // solve
  auto* solve = app.add_subcommand("solve", "Run ApproxOT and print a JSON report");
  Inputs solve_in;
  SolveFlags flags;
  add_input_options(solve, solve_in, false);
  solve->add_flag("--symmetric", flags.symmetric, "Use the symmetric driver (c = r)");
  solve->add_flag("--dense-reference", flags.dense_reference, "Compare against dense Sinkhorn");
  solve->add_flag("--verify", flags.verify, "Compare against the exact LP oracle");
  solve->add_option("--export-plan", flags.export_plan, "Write the dense plan (n <= 256)");
  solve->add_flag("--traces", flags.traces, "Include per-iteration traces");

  // verify
  auto* verify = app.add_subcommand("verify", "Run the invariant battery on one instance");
  Inputs verify_in;
  bool verify_sym = false;
  add_input_options(verify, verify_in, false);
  verify->add_flag("--symmetric", verify_sym, "Use the symmetric driver (c = r)");

  // bench
  auto* bench = app.add_subcommand("bench", "Per-iteration timing sweep, CSV output");
  tws::BenchOptions bopt;
  std::string bench_family = "path", bench_out;
  bool no_dense = false;
  bench->add_option("--family", bench_family, "path | grid | tau_tree");
  bench->add_option("--sizes", bopt.sizes, "Ascending sizes")->delimiter(',')->required();
  bench->add_option("--tau", bopt.tau, "Treewidth parameter");
  bench->add_option("--epsilon-rel", bopt.epsilon_rel, "epsilon / ||C||_inf");
  bench->add_option("--repetitions", bopt.repetitions, "Rows per size");
  bench->add_option("--seed", bopt.seed, "Base seed");
  bench->add_option("--min-time", bopt.min_time, "Seconds of repeated solves per measurement");
  bench->add_option("--dense-max-n", bopt.dense_max_n, "Largest n timed densely");
  bench->add_option("--time-budget", bopt.time_budget, "Stop starting new sizes after this many seconds");
  bench->add_option("--jobs", bopt.jobs, "Parallel repetitions");
  bench->add_flag("--no-dense", no_dense, "Skip the dense reference");
  bench->add_option("--out", bench_out, "CSV path ('-' for stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      spec.family = tws::parse_family(family);
      return cmd_gen(spec, gen_out);
    }
    if (*solve) return cmd_solve(solve_in, flags);
    if (*verify) return cmd_verify(verify_in, verify_sym);
    if (*bench) {
      bopt.family = tws::parse_family(bench_family);
      bopt.dense = !no_dense;
      return cmd_bench(bopt, bench_out);
    }
  } catch (const std::exception& e) {
    std::cout << error_json(e).dump(2) << '\n';
    return kExitError;
  }
  return 0;
}
