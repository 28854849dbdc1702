#pragma once

// Sinkhorn scaling on the implicit kernel, its symmetric variant, and the
// potential / radius diagnostics used by the convergence checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tws/error.hpp"
#include "tws/kernel.hpp"
#include "tws/sparse.hpp"

namespace tws {

struct SinkhornState {
  Vector u;
  Vector v;
  std::size_t k = 0;
  Vector row_marginal;
  Vector col_marginal;
  double gauge_shift = 0.0;  // total m subtracted from u (and added to v)
};

struct SinkhornReport {
  std::size_t iterations = 0;
  bool converged = false;
  double final_gap = 0.0;
  double R = 0.0;
  double eps0 = 0.0;
  double iteration_bound = 0.0;
  std::size_t max_iter = 0;

  // Entry k describes iterate k (before its update).
  std::vector<double> psi_trace;
  std::vector<double> row_gap_trace;
  std::vector<double> col_gap_trace;
  std::vector<double> u_range_trace;
  std::vector<double> v_range_trace;
  // Entry k is the KL divergence of the marginal fixed by update k.
  std::vector<double> kl_trace;
  std::vector<double> wallclock_per_iter;  // seconds

  double max_cancellation = 1.0;
  std::size_t cancellation_warnings = 0;
  OpCount ops;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, SinkhornState state, SinkhornReport report)
      : Error(msg), state_(std::move(state)), report_(std::move(report)) {}
  const SinkhornState& state() const noexcept { return state_; }
  const SinkhornReport& report() const noexcept { return report_; }
  const char* kind() const noexcept override { return "convergence"; }

 private:
  SinkhornState state_;
  SinkhornReport report_;
};

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(q[i] > 0.0)) throw ValidationError("kl_divergence: q must be strictly positive");
    if (p[i] < 0.0) throw ValidationError("kl_divergence: p must be nonnegative");
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

/// ||C||_inf / gamma - ln(min_i,j {r_i, c_j}).
inline double radius_R(const ImplicitKernel& k, std::span<const double> r,
                       std::span<const double> c) {
  if (r.empty() || c.empty()) throw DimensionError("radius_R: empty marginal");
  const double m = std::min(*std::min_element(r.begin(), r.end()),
                            *std::min_element(c.begin(), c.end()));
  if (!(m > 0.0)) throw ValidationError("radius_R: marginals must be strictly positive");
  return k.c_inf_norm / k.gamma - std::log(m);
}

inline double iteration_bound(double R, double eps0) { return 2.0 + 4.0 * R / eps0; }

inline std::size_t default_max_iter(double R, double eps0) {
  return 10 * static_cast<std::size_t>(std::ceil(iteration_bound(R, eps0)));
}

inline double potential_psi(const ImplicitKernel& k, std::span<const double> u,
                            std::span<const double> v, std::span<const double> r,
                            std::span<const double> c) {
  return total_mass(k, u, v) - dot(u, r) - dot(v, c);
}

using SinkhornObserver = std::function<void(const SinkhornState&)>;

struct SinkhornOptions {
  std::size_t max_iter = 0;  // 0: 10 * ceil(2 + 4R/eps0)
  bool record_traces = true;
  bool gauge = true;
  SinkhornObserver observer;
};

namespace detail {

inline void check_sinkhorn_inputs(const ImplicitKernel& k, std::span<const double> r,
                                  std::span<const double> c, double eps0) {
  if (r.size() != k.n || c.size() != k.n) throw DimensionError("sinkhorn: marginal length != n");
  validate_marginal(r, "r");
  validate_marginal(c, "c");
  if (!(eps0 > 0.0) || !(eps0 < 2.0)) throw ValidationError("sinkhorn: eps0 must lie in (0, 2)");
}

inline void note_cancellation(SinkhornReport& rep, double ratio) {
  rep.max_cancellation = std::max(rep.max_cancellation, ratio);
  if (ratio > kCancellationWarning) ++rep.cancellation_warnings;
}

}  // namespace detail

/**
 * Alternating Sinkhorn from u = v = 0: even k rescales rows, odd k columns,
 * until ||B1 - r||_1 + ||B^T 1 - c||_1 < eps0. Each iteration first shifts
 * (u, v) by (-m, +m) with m = mean(u), which leaves B unchanged.
 */
inline std::pair<SinkhornState, SinkhornReport> sinkhorn(const ImplicitKernel& k,
                                                         std::span<const double> r,
                                                         std::span<const double> c, double eps0,
                                                         const SinkhornOptions& opt = {}) {
  detail::check_sinkhorn_inputs(k, r, c, eps0);
  using clock = std::chrono::steady_clock;
  const std::size_t n = k.n;

  SinkhornReport rep;
  rep.R = radius_R(k, r, c);
  rep.eps0 = eps0;
  rep.iteration_bound = iteration_bound(rep.R, eps0);
  rep.max_iter = opt.max_iter ? opt.max_iter : default_max_iter(rep.R, eps0);

  SinkhornState st;
  st.u.assign(n, 0.0);
  st.v.assign(n, 0.0);
  auto tick = clock::now();
  for (;;) {
    if (opt.gauge) {
      const double m = sum(st.u) / static_cast<double>(n);
      for (double& x : st.u) x -= m;
      for (double& x : st.v) x += m;
      st.gauge_shift += m;
    }
    auto marg = scaled_marginals(k, st.u, st.v, &rep.ops);
    detail::note_cancellation(rep, marg.max_cancellation);
    st.row_marginal = std::move(marg.row);
    st.col_marginal = std::move(marg.col);
    const double row_gap = l1_distance(st.row_marginal, r);
    const double col_gap = l1_distance(st.col_marginal, c);
    rep.final_gap = row_gap + col_gap;
    if (opt.record_traces) {
      rep.psi_trace.push_back(sum(st.row_marginal) - dot(st.u, r) - dot(st.v, c));
      rep.row_gap_trace.push_back(row_gap);
      rep.col_gap_trace.push_back(col_gap);
      rep.u_range_trace.push_back(value_range(st.u));
      rep.v_range_trace.push_back(value_range(st.v));
    }
    if (opt.observer) opt.observer(st);

    if (rep.final_gap < eps0) {
      rep.converged = true;
      break;
    }
    if (st.k >= rep.max_iter) {
      rep.iterations = st.k;
      throw ConvergenceError("sinkhorn did not reach eps0 = " + std::to_string(eps0) + " in " +
                                 std::to_string(rep.max_iter) + " iterations",
                             std::move(st), std::move(rep));
    }
    if (st.k % 2 == 0) {
      if (opt.record_traces) rep.kl_trace.push_back(kl_divergence(r, st.row_marginal));
      for (std::size_t i = 0; i < n; ++i) st.u[i] += std::log(r[i]) - std::log(st.row_marginal[i]);
    } else {
      if (opt.record_traces) rep.kl_trace.push_back(kl_divergence(c, st.col_marginal));
      for (std::size_t j = 0; j < n; ++j) st.v[j] += std::log(c[j]) - std::log(st.col_marginal[j]);
    }
    ++st.k;
    if (opt.record_traces) {
      const auto now = clock::now();
      rep.wallclock_per_iter.push_back(std::chrono::duration<double>(now - tick).count());
      tick = now;
    }
  }
  rep.iterations = st.k;
  return {std::move(st), std::move(rep)};
}

struct SymmetricSinkhornResult {
  Vector u;
  Vector marginal;  // B(u, u) 1
  SinkhornReport report;
};

/**
 * Symmetric scaling B(u) = diag(e^u) K diag(e^u) for a symmetric kernel.
 * Uses the damped step u += (ln r - ln x) / 2; stops when ||x - r||_1 < eps0.
 */
inline SymmetricSinkhornResult sinkhorn_symmetric(const ImplicitKernel& k,
                                                  std::span<const double> r, double eps0,
                                                  const SinkhornOptions& opt = {}) {
  detail::check_sinkhorn_inputs(k, r, r, eps0);
  if (!k.symmetric) throw ValidationError("sinkhorn_symmetric: kernel is not symmetric");
  using clock = std::chrono::steady_clock;
  const std::size_t n = k.n;

  SymmetricSinkhornResult out;
  auto& rep = out.report;
  rep.R = radius_R(k, r, r);
  rep.eps0 = eps0;
  rep.iteration_bound = iteration_bound(rep.R, eps0);
  rep.max_iter = opt.max_iter ? opt.max_iter : default_max_iter(rep.R, eps0);

  SinkhornState st;
  st.u.assign(n, 0.0);
  auto tick = clock::now();
  for (;;) {
    auto marg = scaled_marginals(k, st.u, st.u, &rep.ops);
    detail::note_cancellation(rep, marg.max_cancellation);
    st.row_marginal = std::move(marg.row);
    st.col_marginal = st.row_marginal;
    st.v = st.u;
    const double gap = l1_distance(st.row_marginal, r);
    rep.final_gap = gap;
    if (opt.record_traces) {
      rep.psi_trace.push_back(sum(st.row_marginal) - 2.0 * dot(st.u, r));
      rep.row_gap_trace.push_back(gap);
      rep.col_gap_trace.push_back(gap);
      rep.u_range_trace.push_back(value_range(st.u));
      rep.v_range_trace.push_back(value_range(st.u));
    }
    if (opt.observer) opt.observer(st);

    if (gap < eps0) {
      rep.converged = true;
      break;
    }
    if (st.k >= rep.max_iter) {
      rep.iterations = st.k;
      throw ConvergenceError("symmetric sinkhorn did not reach eps0 = " + std::to_string(eps0),
                             std::move(st), std::move(rep));
    }
    if (opt.record_traces) rep.kl_trace.push_back(kl_divergence(r, st.row_marginal));
    for (std::size_t i = 0; i < n; ++i)
      st.u[i] += 0.5 * (std::log(r[i]) - std::log(st.row_marginal[i]));
    ++st.k;
    if (opt.record_traces) {
      const auto now = clock::now();
      rep.wallclock_per_iter.push_back(std::chrono::duration<double>(now - tick).count());
      tick = now;
    }
  }
  rep.iterations = st.k;
  out.u = std::move(st.u);
  out.marginal = std::move(st.row_marginal);
  return out;
}

}  // namespace tws
