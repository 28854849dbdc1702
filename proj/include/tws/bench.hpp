#pragma once

// Per-iteration timing of implicit vs dense Sinkhorn over a size sweep.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tws/instance.hpp"
#include "tws/kernel.hpp"
#include "tws/oracle.hpp"
#include "tws/sinkhorn.hpp"
#include "tws/transport.hpp"

namespace tws {

struct BenchOptions {
  Family family = Family::path;
  std::vector<std::size_t> sizes;
  std::size_t tau = 1;
  double epsilon_rel = 0.25;
  std::size_t repetitions = 3;
  std::uint64_t seed = 1;
  double min_time = 0.05;       // seconds of repeated runs per measurement
  std::size_t dense_max_n = 2048;
  bool implicit = true;
  bool dense = true;
  double time_budget = 0.0;     // seconds; 0 = unlimited
  unsigned jobs = 1;
};

struct BenchRow {
  std::size_t n = 0;
  std::size_t tau = 0;
  std::size_t nnz_A = 0;
  std::optional<double> per_iter_ns_implicit;
  std::optional<double> per_iter_ns_dense;
  std::size_t iterations = 0;
  double R = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  bool truncated = false;
  std::string truncation_reason;
};

/// The Sinkhorn problem a benchmark size runs: driver parameters with
/// epsilon raised to the precision-envelope minimum when needed.
struct BenchProblem {
  ProblemInstance instance;
  double epsilon = 0.0;
  DriverParameters params;
  ImplicitKernel kernel;
};

inline BenchProblem bench_problem(const BenchOptions& opt, std::size_t n, std::uint64_t seed) {
  InstanceSpec spec;
  spec.family = opt.family;
  spec.n = n;
  spec.tau = opt.tau;
  spec.seed = seed;
  BenchProblem p;
  p.instance = generate_instance(spec);
  const double c_inf = p.instance.cost.max_abs();
  p.epsilon = std::max(opt.epsilon_rel * c_inf, min_feasible_epsilon(c_inf, n));
  p.params = driver_parameters(p.instance.cost, p.instance.r, p.instance.c, p.epsilon);
  // The sweep always times Sinkhorn, even where the driver would short-cut.
  p.params.eps0 = std::min(p.epsilon / (8.0 * c_inf), 1.0);
  p.params.sinkhorn_tol = p.params.eps0 / 2.0;
  p.params.r_tilde = smooth_marginal(p.instance.r, p.params.eps0);
  p.params.c_tilde = smooth_marginal(p.instance.c, p.params.eps0);
  p.kernel = build_kernel(p.instance.cost, p.params.gamma);
  return p;
}

namespace detail {

/// Runs `once` until `min_time` has elapsed; returns seconds per call.
template <class F>
double time_repeated(F&& once, double min_time) {
  using clock = std::chrono::steady_clock;
  std::size_t calls = 0;
  const auto start = clock::now();
  double elapsed = 0.0;
  do {
    once();
    ++calls;
    elapsed = std::chrono::duration<double>(clock::now() - start).count();
  } while (elapsed < min_time);
  return elapsed / static_cast<double>(calls);
}

}  // namespace detail

/// One (size, repetition) measurement. Per-iteration time is the solve time
/// divided by iterations + 1 (the final marginal evaluation is also a pass).
inline BenchRow bench_one(const BenchOptions& opt, std::size_t n, std::size_t rep) {
  const BenchProblem p = bench_problem(opt, n, opt.seed + rep);
  BenchRow row;
  row.n = n;
  row.tau = opt.tau;
  row.nnz_A = p.kernel.A.nnz();
  SinkhornOptions so;
  so.record_traces = false;
  const auto& d = p.params;

  auto [state, report] = sinkhorn(p.kernel, d.r_tilde, d.c_tilde, d.sinkhorn_tol, so);
  row.iterations = report.iterations;
  row.R = report.R;
  if (opt.implicit) {
    const double t = detail::time_repeated(
        [&] { (void)sinkhorn(p.kernel, d.r_tilde, d.c_tilde, d.sinkhorn_tol, so); },
        opt.min_time);
    row.per_iter_ns_implicit = 1e9 * t / static_cast<double>(report.iterations + 1);
  }
  if (opt.dense && n <= opt.dense_max_n) {
    const DenseMatrix K = dense_kernel(p.instance.cost, d.gamma, opt.dense_max_n);
    const std::size_t cap = report.max_iter;
    std::size_t iters = 0;
    const double t = detail::time_repeated(
        [&] { iters = dense_sinkhorn(K, d.r_tilde, d.c_tilde, d.sinkhorn_tol, cap).k; },
        opt.min_time);
    row.per_iter_ns_dense = 1e9 * t / static_cast<double>(iters + 1);
  }
  return row;
}

inline BenchResult run_bench(const BenchOptions& opt) {
  if (!std::is_sorted(opt.sizes.begin(), opt.sizes.end()))
    throw ValidationError("bench: sizes must be ascending");
  if (opt.repetitions == 0) throw ValidationError("bench: repetitions must be positive");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  BenchResult out;
  for (std::size_t n : opt.sizes) {
    if (opt.time_budget > 0.0 &&
        std::chrono::duration<double>(clock::now() - start).count() > opt.time_budget) {
      out.truncated = true;
      out.truncation_reason = "time budget exhausted before n = " + std::to_string(n);
      break;
    }
    if (opt.jobs <= 1) {
      for (std::size_t rep = 0; rep < opt.repetitions; ++rep) out.rows.push_back(bench_one(opt, n, rep));
    } else {
      std::vector<std::future<BenchRow>> pending;
      for (std::size_t rep = 0; rep < opt.repetitions; ++rep) {
        pending.push_back(std::async(std::launch::async, [&opt, n, rep] { return bench_one(opt, n, rep); }));
        if (pending.size() >= opt.jobs || rep + 1 == opt.repetitions) {
          for (auto& f : pending) out.rows.push_back(f.get());
          pending.clear();
        }
      }
    }
  }
  return out;
}

inline void write_bench_csv(std::ostream& os, const BenchResult& res) {
  os << "n,tau,nnz_A,per_iter_ns_implicit,per_iter_ns_dense,iterations,R\n";
  os.precision(10);
  for (const auto& r : res.rows) {
    os << r.n << ',' << r.tau << ',' << r.nnz_A << ',';
    if (r.per_iter_ns_implicit) os << *r.per_iter_ns_implicit;
    os << ',';
    if (r.per_iter_ns_dense) os << *r.per_iter_ns_dense;
    os << ',' << r.iterations << ',' << r.R << '\n';
  }
  if (res.truncated) os << "# truncated: " << res.truncation_reason << '\n';
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::nan("");
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace tws
