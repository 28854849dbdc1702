// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tws/tws.hpp"

using namespace tws;

namespace {

struct Criterion {
  Criterion(int id_, std::string title_) : id(id_), title(std::move(title_)) {}

  int id;
  std::string title;
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = -std::numeric_limits<double>::infinity();  // largest (value - bound)
  std::string note;
  std::string first_failure;

  void record(bool ok, double margin, const std::string& what) {
    ++checked;
    worst = std::max(worst, margin);
    if (!ok) {
      if (!failed) first_failure = what;
      ++failed;
    }
  }
  void check_le(double value, double bound, const std::string& what) {
    record(value <= bound, value - bound, what + ": " + std::to_string(value) + " > " + std::to_string(bound));
  }
  bool passed() const { return checked > 0 && failed == 0; }
};

struct Variant {
  Family family;
  std::size_t tau;
  std::string name;
};

const std::vector<Variant> kVariants{{Family::path, 1, "path"},
                                     {Family::grid, 0, "grid"},
                                     {Family::tau_tree, 1, "tau_tree(1)"},
                                     {Family::tau_tree, 2, "tau_tree(2)"},
                                     {Family::tau_tree, 3, "tau_tree(3)"}};
const std::vector<std::size_t> kSizes{4, 8, 16, 32, 64};
constexpr std::size_t kSeedsPerSize = 10;

ProblemInstance make_instance(const Variant& v, std::size_t n, std::uint64_t seed) {
  InstanceSpec s;
  s.family = v.family;
  s.n = n;
  s.seed = seed;
  if (v.family == Family::grid) {
    std::size_t w = 1;
    while (w * w < n) w *= 2;
    if (w * w > n) w /= 2;
    s.width = w;
    s.height = n / w;
    s.tau = w;
  } else {
    s.tau = v.tau;
  }
  return generate_instance(s);
}

std::string label(const Variant& v, std::size_t n, std::uint64_t seed, double rel) {
  return v.name + " n=" + std::to_string(n) + " seed=" + std::to_string(seed) + " eps=" + std::to_string(rel) + "|C|";
}

// Dense rounding on the materialized B, written independently of the library.
DenseMatrix dense_round(const DenseMatrix& b, const Vector& r, const Vector& c) {
  const std::size_t n = b.rows();
  DenseMatrix f = b;
  const Vector rs = f.row_sums();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::min(r[i] / rs[i], 1.0);
    for (std::size_t j = 0; j < n; ++j) f(i, j) *= x;
  }
  const Vector cs = f.col_sums();
  for (std::size_t j = 0; j < n; ++j) {
    const double y = std::min(c[j] / cs[j], 1.0);
    for (std::size_t i = 0; i < n; ++i) f(i, j) *= y;
  }
  const Vector rs2 = f.row_sums(), cs2 = f.col_sums();
  Vector p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = std::max(r[i] - rs2[i], 0.0);
  for (std::size_t j = 0; j < n; ++j) q[j] = std::max(c[j] - cs2[j], 0.0);
  const double pn = sum(p);
  if (pn > 0.0)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) f(i, j) += p[i] * q[j] / pn;
  return f;
}

DenseMatrix dense_scaled(const SparseMatrix& cost, double gamma, const Vector& u, const Vector& v) {
  const std::size_t n = cost.n_rows();
  const DenseMatrix cd = cost.to_dense();
  DenseMatrix b(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b(i, j) = std::exp(u[i] + v[j] - cd(i, j) / gamma);
  return b;
}

double l1(const DenseMatrix& a, const DenseMatrix& b) { return l1_distance(a.data(), b.data()); }

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Criteria 1, 2, 3, 5, 6, 10 share the instance suite.
void run_suite(Criterion& c1, Criterion& c2, Criterion& c3, Criterion& c5, Criterion& c6, Criterion& c10) {
  std::size_t at_stated = 0, at_envelope = 0, refusals_ok = 0, refusals = 0;
  for (const auto& v : kVariants)
    for (std::size_t n : kSizes)
      for (std::uint64_t s = 1; s <= kSeedsPerSize; ++s) {
        const std::uint64_t seed = 1000 * n + 17 * s + v.tau;
        const ProblemInstance inst = make_instance(v, n, seed);
        const double c_inf = inst.cost.max_abs();
        const ExactOtResult exact = exact_ot(inst.cost, inst.r, inst.c);
        const ExactOtResult exact_sym = exact_ot(inst.cost, inst.r, inst.r);
        const bool cert_ok = verify_dual_certificate(inst.cost, inst.r, inst.c, exact.cost, exact.cert) &&
                             verify_dual_certificate(inst.cost, inst.r, inst.r, exact_sym.cost, exact_sym.cert);

        for (double rel : {0.25, 0.1}) {
          const std::string what = label(v, n, seed, rel);
          double eps = rel * c_inf;
          const DriverParameters d = driver_parameters(inst.cost, inst.r, inst.c, eps);
          if (d.mode == DriverMode::sinkhorn && !d.within_envelope) {
            ++refusals;
            try {
              (void)approx_ot(inst.cost, inst.r, inst.c, eps);
            } catch (const PrecisionEnvelopeError& e) {
              if (std::abs(e.min_epsilon() - min_feasible_epsilon(c_inf, n)) <= 1e-15 * c_inf) ++refusals_ok;
            }
            eps = min_feasible_epsilon(c_inf, n);
            ++at_envelope;
          } else {
            ++at_stated;
          }

          const OtSolution sol = approx_ot(inst.cost, inst.r, inst.c, eps);
          c1.record(cert_ok, cert_ok ? 0.0 : 1.0, what + ": oracle certificate rejected");
          c1.check_le(sol.cost, exact.cost + eps + 1e-8, what + " cost");

          const PlanMarginals pm = plan_marginals(sol.plan);
          c2.check_le(l1_distance(pm.row, inst.r), 1e-9, what + " row");
          c2.check_le(l1_distance(pm.col, inst.c), 1e-9, what + " col");

          const SinkhornReport& rep = sol.sinkhorn_report;
          if (sol.mode == DriverMode::sinkhorn) {
            const auto k = build_kernel(inst.cost, sol.gamma);
            const double r_tilde = radius_R(k, sol.r_tilde, sol.c_tilde);
            c3.record(rep.converged, rep.converged ? 0.0 : 1.0, what + " not converged");
            c3.check_le(static_cast<double>(rep.iterations), iteration_bound(r_tilde, rep.eps0), what);
            c5.check_le(kl_identity_residual(rep), 1e-10, what + " KL identity");
            c5.check_le(pinsker_violation(rep), 1e-12, what + " Pinsker");
            c6.check_le(range_excess(rep), 1e-9, what);
          }

          const OtSolution sym = approx_ot_symmetric(inst.cost, inst.r, eps);
          const OtSolution gen = approx_ot(inst.cost, inst.r, inst.r, eps);
          const PlanMarginals sm = plan_marginals(sym.plan);
          c10.check_le(l1_distance(sm.row, inst.r), 1e-9, what + " symmetric row");
          c10.check_le(l1_distance(sm.col, inst.r), 1e-9, what + " symmetric col");
          c10.check_le(sym.cost, exact_sym.cost + eps + 1e-8, what + " symmetric vs oracle");
          c10.check_le(std::abs(sym.cost - gen.cost), 2.0 * eps, what + " symmetric vs general");
          if (sym.mode == DriverMode::sinkhorn) {
            const auto& sr = sym.sinkhorn_report;
            const auto k = build_kernel(inst.cost, sym.gamma);
            c3.record(sr.converged, sr.converged ? 0.0 : 1.0, what + " symmetric not converged");
            c3.check_le(static_cast<double>(sr.iterations), iteration_bound(radius_R(k, sym.r_tilde, sym.r_tilde), sr.eps0),
                        what + " symmetric");
            c6.check_le(range_excess(sr), 1e-9, what + " symmetric");
          }
        }
      }
  c1.record(refusals_ok == refusals, 0.0, "envelope refusal did not report the minimum epsilon");
  c1.note = std::to_string(at_stated) + " solves at the stated epsilon, " + std::to_string(at_envelope) +
            " refused by the precision envelope and rerun at its minimum (" + std::to_string(refusals_ok) + "/" +
            std::to_string(refusals) + " refusals reported the minimum)";
}

void criterion4(Criterion& c4) {
  Rng rng(4242);
  for (int t = 0; t < 100; ++t) {
    const Variant& v = kVariants[static_cast<std::size_t>(t) % kVariants.size()];
    const std::size_t n = kSizes[rng.index(4)];  // 4..32
    const ProblemInstance inst = make_instance(v, n, 90000 + static_cast<std::uint64_t>(t));
    const double gamma = inst.cost.max_abs() / rng.uniform(1.0, 25.0);
    auto k = std::make_shared<const ImplicitKernel>(build_kernel(inst.cost, gamma));
    Vector u(n), w(n);
    if (t % 2 == 0) {
      for (auto& x : u) x = rng.uniform(-2.0, 2.0) - std::log(static_cast<double>(n));
      for (auto& x : w) x = rng.uniform(-2.0, 2.0) - std::log(static_cast<double>(n));
    } else {
      SinkhornOptions opt;
      opt.max_iter = 1 + rng.index(5);
      try {
        auto [st, rep] = sinkhorn(*k, inst.r, inst.c, 1e-12, opt);
        u = st.u;
        w = st.v;
      } catch (const ConvergenceError& e) {
        u = e.state().u;
        w = e.state().v;
      }
    }
    const ImplicitPlan plan = round_to_polytope(k, u, w, inst.r, inst.c);
    const DenseMatrix b = dense_scaled(inst.cost, gamma, u, w);
    const DenseMatrix g = dense_round(b, inst.r, inst.c);
    const std::string what = "tuple " + std::to_string(t) + " (" + v.name + ", n=" + std::to_string(n) + ")";
    const double bound = 2.0 * (l1_distance(b.row_sums(), inst.r) + l1_distance(b.col_sums(), inst.c));
    c4.check_le(l1(g, b), bound + 1e-9, what);
    c4.check_le(l1(plan_to_dense(plan), g), 1e-12, what + " library vs dense rounding");
  }
}

void criterion7(Criterion& c7) {
  BenchOptions opt;
  opt.family = Family::path;
  opt.repetitions = 5;
  opt.min_time = 0.25;
  opt.seed = 7;

  BenchOptions imp = opt;
  imp.dense = false;
  imp.sizes = {1024, 2048, 4096, 16384, 65536};
  BenchOptions den = opt;
  den.implicit = false;
  den.sizes = {256, 512, 1024, 2048};

  auto medians = [](const BenchResult& res, const std::vector<std::size_t>& sizes, bool implicit) {
    std::vector<double> out;
    for (std::size_t n : sizes) {
      std::vector<double> xs;
      for (const auto& r : res.rows)
        if (r.n == n) {
          const auto& t = implicit ? r.per_iter_ns_implicit : r.per_iter_ns_dense;
          if (t) xs.push_back(*t);
        }
      out.push_back(median(xs));
    }
    return out;
  };

  const BenchResult ri = run_bench(imp);
  const BenchResult rd = run_bench(den);
  const std::vector<std::size_t> slope_sizes{1024, 4096, 16384, 65536};
  const std::vector<double> yi = medians(ri, slope_sizes, true);
  const std::vector<double> yd = medians(rd, den.sizes, false);
  std::vector<double> xi(slope_sizes.begin(), slope_sizes.end()), xd(den.sizes.begin(), den.sizes.end());
  const double si = loglog_slope(xi, yi), sd = loglog_slope(xd, yd);
  const double imp2048 = medians(ri, {2048}, true)[0];
  const double speedup = yd.back() / imp2048;

  c7.record(si >= 0.8 && si <= 1.3, std::max(0.8 - si, si - 1.3), "implicit slope " + std::to_string(si));
  c7.record(sd >= 1.7 && sd <= 2.3, std::max(1.7 - sd, sd - 2.3), "dense slope " + std::to_string(sd));
  c7.record(speedup >= 10.0, 10.0 - speedup, "speedup at 2048 " + std::to_string(speedup));
  char buf[200];
  std::snprintf(buf, sizeof buf, "implicit slope %.3f, dense slope %.3f, speedup at n=2048 %.1fx", si, sd, speedup);
  c7.note = buf;
}

void criterion8(Criterion& c8) {
  std::size_t largest = 0;
  for (std::size_t tau = 1; tau <= 4; ++tau)
    for (std::size_t n : {tau + 1, std::size_t{10}, std::size_t{1000}, std::size_t{20000}, std::size_t{100000}}) {
      const SupportGraph g = gen_tau_tree(n, tau, 31 * n + tau);
      const SymbolicFactor sym = symbolic_cholesky(g, reverse_construction_order(n));
      const std::string what = "tau=" + std::to_string(tau) + " n=" + std::to_string(n);
      c8.check_le(static_cast<double>(sym.fill_count), 0.0, what + " fill");
      const std::size_t expect = tau * (tau + 1) / 2 + tau * (n - tau - 1) + n;
      c8.record(sym.pattern.nnz() == expect, 0.0,
                what + " nnz " + std::to_string(sym.pattern.nnz()) + " != " + std::to_string(expect));
      c8.check_le(static_cast<double>(factorization_cost(sym.pattern)), 4.0 * static_cast<double>(n * tau * tau),
                  what + " cost");
      largest = std::max(largest, n);
    }
  c8.note = "tau in 1..4, n up to " + std::to_string(largest);
}

void criterion9(Criterion& c9) {
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    const Variant& v = kVariants[static_cast<std::size_t>(t) % kVariants.size()];
    const std::size_t n = kSizes[static_cast<std::size_t>(t) % kSizes.size()];
    const ProblemInstance inst = make_instance(v, n, 50000 + static_cast<std::uint64_t>(t));
    const double c_inf = inst.cost.max_abs();
    const double eps = std::max(0.1 * c_inf, min_feasible_epsilon(c_inf, n));
    const DriverParameters d = driver_parameters(inst.cost, inst.r, inst.c, eps);
    const auto k = build_kernel(inst.cost, d.gamma);

    std::vector<Vector> us, vs;
    SinkhornOptions opt;
    opt.observer = [&](const SinkhornState& s) {
      Vector u = s.u, w = s.v;
      for (auto& x : u) x += s.gauge_shift;
      for (auto& x : w) x -= s.gauge_shift;
      us.push_back(std::move(u));
      vs.push_back(std::move(w));
    };
    auto [st, rep] = sinkhorn(k, d.r_tilde, d.c_tilde, d.sinkhorn_tol, opt);

    std::size_t compared = 0;
    double dev = 0.0;
    const auto dense = dense_sinkhorn(inst.cost, d.gamma, d.r_tilde, d.c_tilde, d.sinkhorn_tol, rep.max_iter,
                                      [&](std::size_t it, std::span<const double> u, std::span<const double> w) {
                                        if (it >= us.size()) return;
                                        for (std::size_t i = 0; i < u.size(); ++i)
                                          dev = std::max({dev, std::abs(u[i] - us[it][i]), std::abs(w[i] - vs[it][i])});
                                        ++compared;
                                      });
    const std::string what = v.name + " n=" + std::to_string(n);
    c9.record(dense.k == rep.iterations && compared == us.size(), 0.0,
              what + " iteration counts differ (" + std::to_string(dense.k) + " vs " + std::to_string(rep.iterations) + ")");
    c9.check_le(dev, 1e-10, what);
    worst = std::max(worst, dev);
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "30 instances, max deviation %.2e", worst);
  c9.note = buf;
}

}  // namespace

int main() {
  std::vector<Criterion> cs{
      {1, "epsilon-approximation against the exact LP"},
      {2, "rounded plans are feasible"},
      {3, "iteration count within 2 + 4R/eps0"},
      {4, "rounding distance bound"},
      {5, "potential decrease equals KL, Pinsker bound"},
      {6, "iterate range at most R"},
      {7, "per-iteration scaling, implicit vs dense"},
      {8, "tau-tree fill and factorization cost"},
      {9, "implicit and dense Sinkhorn iterates agree"},
      {10, "symmetric path consistency"},
  };
  auto by = [&](int id) -> Criterion& { return cs[static_cast<std::size_t>(id - 1)]; };

  const auto t0 = std::chrono::steady_clock::now();
  run_suite(by(1), by(2), by(3), by(5), by(6), by(10));
  const double suite_s = seconds_since(t0);
  criterion4(by(4));
  criterion8(by(8));
  criterion9(by(9));
  const auto t7 = std::chrono::steady_clock::now();
  criterion7(by(7));
  const double bench_s = seconds_since(t7);

  bool all = true;
  for (const auto& c : cs) {
    all = all && c.passed();
    std::printf("%s criterion %2d: %s [%zu checks, worst margin %.3e]", c.passed() ? "PASS" : "FAIL", c.id,
                c.title.c_str(), c.checked, c.worst);
    if (!c.note.empty()) std::printf(" %s", c.note.c_str());
    if (c.failed) std::printf(" (%zu failed; first: %s)", c.failed, c.first_failure.c_str());
    std::printf("\n");
  }
  std::printf("instance suite %.1fs, scaling benchmark %.1fs\n", suite_s, bench_s);
  std::printf("%s\n", all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}
