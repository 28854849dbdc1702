#pragma once

// Rounding onto the transportation polytope, the ApproxOT drivers, and the
// implicit plan X B Y + p q^T / ||p||_1 kept in factored form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tws/error.hpp"
#include "tws/instance.hpp"
#include "tws/kernel.hpp"
#include "tws/sinkhorn.hpp"
#include "tws/sparse.hpp"

namespace tws {

/// ||p||_1 at or below which the rank-one correction is dropped.
inline constexpr double kCorrectionThreshold = 1e-14;

/// Largest ||C||_inf / gamma the drivers accept.
inline constexpr double kPrecisionEnvelope = 25.0;

struct ImplicitPlan {
  std::shared_ptr<const ImplicitKernel> kernel;
  Vector u;
  Vector v;
  Vector x_scale;
  Vector y_scale;
  Vector p;
  Vector q;
  bool correction_active = false;
  double p_norm = 0.0;

  std::size_t n() const noexcept { return kernel ? kernel->n : 0; }

  /// Left and right diagonal factors x ⊙ e^u and y ⊙ e^v.
  Vector left() const {
    Vector a(n());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = x_scale[i] * std::exp(u[i]);
    return a;
  }
  Vector right() const {
    Vector b(n());
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = y_scale[j] * std::exp(v[j]);
    return b;
  }
};

namespace detail {

inline Vector exp_of(std::span<const double> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
  return out;
}

inline void set_correction(ImplicitPlan& plan, Vector p, Vector q) {
  const double pn = sum(p);
  plan.correction_active = pn > kCorrectionThreshold;
  if (plan.correction_active) {
    plan.p = std::move(p);
    plan.q = std::move(q);
    plan.p_norm = pn;
  } else {
    plan.p.assign(plan.n(), 0.0);
    plan.q.assign(plan.n(), 0.0);
    plan.p_norm = 0.0;
  }
}

}  // namespace detail

/**
 * Rounds B(u, v) into U(r, c): cap rows with x = min(r / B1, 1), cap columns
 * of XB with y = min(c / (XB)^T 1, 1), then add p q^T / ||p||_1 for the
 * remaining deficits. Nothing n x n is formed.
 */
inline ImplicitPlan round_to_polytope(std::shared_ptr<const ImplicitKernel> k,
                                      std::span<const double> u, std::span<const double> v,
                                      std::span<const double> r, std::span<const double> c) {
  const std::size_t n = k->n;
  if (u.size() != n || v.size() != n || r.size() != n || c.size() != n)
    throw DimensionError("round_to_polytope: length mismatch");
  if (!all_finite(u) || !all_finite(v)) throw ValidationError("round_to_polytope: u, v not finite");

  ImplicitPlan plan;
  plan.kernel = std::move(k);
  plan.u.assign(u.begin(), u.end());
  plan.v.assign(v.begin(), v.end());
  const ImplicitKernel& K = *plan.kernel;

  const Vector row_b = scaled_marginals(K, u, v).row;
  plan.x_scale.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.x_scale[i] = std::min(r[i] / row_b[i], 1.0);

  const Vector eu = detail::exp_of(u), ev = detail::exp_of(v);
  Vector xu(n);
  for (std::size_t i = 0; i < n; ++i) xu[i] = plan.x_scale[i] * eu[i];
  Vector col_b0 = kernel_matvec_transpose(K, xu);
  for (std::size_t j = 0; j < n; ++j) col_b0[j] *= ev[j];
  plan.y_scale.resize(n);
  for (std::size_t j = 0; j < n; ++j) plan.y_scale[j] = std::min(c[j] / col_b0[j], 1.0);

  Vector yv(n);
  for (std::size_t j = 0; j < n; ++j) yv[j] = plan.y_scale[j] * ev[j];
  const Vector k_yv = kernel_matvec(K, yv);
  Vector p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = std::max(r[i] - xu[i] * k_yv[i], 0.0);
  for (std::size_t j = 0; j < n; ++j) q[j] = std::max(c[j] - plan.y_scale[j] * col_b0[j], 0.0);
  detail::set_correction(plan, std::move(p), std::move(q));
  return plan;
}

inline ImplicitPlan round_to_polytope(const ImplicitKernel& k, std::span<const double> u,
                                      std::span<const double> v, std::span<const double> r,
                                      std::span<const double> c) {
  return round_to_polytope(std::make_shared<const ImplicitKernel>(k), u, v, r, c);
}

/**
 * Symmetric rounding of B(u) = diag(e^u) K diag(e^u). One scaling
 * z = min(r / B1, 1) is applied on both sides so B1 = ZBZ stays symmetric,
 * then G = B1 + p p^T / ||p||_1 with p = r - B1 1.
 */
inline ImplicitPlan round_symmetric(std::shared_ptr<const ImplicitKernel> k,
                                    std::span<const double> u, std::span<const double> r) {
  const std::size_t n = k->n;
  if (u.size() != n || r.size() != n) throw DimensionError("round_symmetric: length mismatch");
  if (!k->symmetric) throw ValidationError("round_symmetric: kernel is not symmetric");
  if (!all_finite(u)) throw ValidationError("round_symmetric: u not finite");

  ImplicitPlan plan;
  plan.kernel = std::move(k);
  plan.u.assign(u.begin(), u.end());
  plan.v = plan.u;
  const ImplicitKernel& K = *plan.kernel;

  const Vector row_b = scaled_marginals(K, u, u).row;
  plan.x_scale.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.x_scale[i] = std::min(r[i] / row_b[i], 1.0);
  plan.y_scale = plan.x_scale;

  const Vector eu = detail::exp_of(u);
  Vector zu(n);
  for (std::size_t i = 0; i < n; ++i) zu[i] = plan.x_scale[i] * eu[i];
  const Vector k_zu = kernel_matvec(K, zu);
  Vector p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = std::max(r[i] - zu[i] * k_zu[i], 0.0);
  Vector q = p;
  detail::set_correction(plan, std::move(p), std::move(q));
  return plan;
}

inline ImplicitPlan round_symmetric(const ImplicitKernel& k, std::span<const double> u,
                                    std::span<const double> r) {
  return round_symmetric(std::make_shared<const ImplicitKernel>(k), u, r);
}

struct PlanMarginals {
  Vector row;
  Vector col;
};

inline PlanMarginals plan_marginals(const ImplicitPlan& plan) {
  const ImplicitKernel& K = *plan.kernel;
  const Vector a = plan.left(), b = plan.right();
  PlanMarginals m{kernel_matvec(K, b), kernel_matvec_transpose(K, a)};
  for (std::size_t i = 0; i < plan.n(); ++i) m.row[i] *= a[i];
  for (std::size_t j = 0; j < plan.n(); ++j) m.col[j] *= b[j];
  if (plan.correction_active) {
    const double sq = sum(plan.q) / plan.p_norm, sp = sum(plan.p) / plan.p_norm;
    for (std::size_t i = 0; i < plan.n(); ++i) m.row[i] += plan.p[i] * sq;
    for (std::size_t j = 0; j < plan.n(); ++j) m.col[j] += plan.q[j] * sp;
  }
  return m;
}

/// <C, X B Y> over supp(C) plus p^T C q / ||p||_1. Cost O(nnz(C) + nnz(A) + n).
inline double plan_cost(const ImplicitPlan& plan, const SparseMatrix& cost) {
  const std::size_t n = plan.n();
  if (cost.n_rows() != n || cost.n_cols() != n) throw DimensionError("plan_cost: shape mismatch");
  const Vector a = plan.left(), b = plan.right();
  const SparseMatrix& A = plan.kernel->A;
  const auto cs = cost.column_starts();
  const auto cr = cost.row_indices();
  const auto cv = cost.values();
  const auto as = A.column_starts();
  const auto ar = A.row_indices();
  const auto& kv = plan.kernel->k_values;
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    // Merge column j of C with column j of A to find K_ij.
    std::size_t q = as[j];
    double col = 0.0;
    for (std::size_t p = cs[j]; p < cs[j + 1]; ++p) {
      const std::size_t i = cr[p];
      while (q < as[j + 1] && ar[q] < i) ++q;
      const double kij = (q < as[j + 1] && ar[q] == i) ? kv[q] : 1.0;
      col += cv[p] * a[i] * kij;
    }
    total += col * b[j];
  }
  if (plan.correction_active) total += dot(plan.p, matvec(cost, plan.q)) / plan.p_norm;
  return total;
}

inline DenseMatrix plan_to_dense(const ImplicitPlan& plan, std::size_t cap = kDenseCap) {
  DenseMatrix g = kernel_to_dense(*plan.kernel, cap);
  const Vector a = plan.left(), b = plan.right();
  const std::size_t n = plan.n();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      g(i, j) *= a[i] * b[j];
      if (plan.correction_active) g(i, j) += plan.p[i] * plan.q[j] / plan.p_norm;
    }
  }
  return g;
}

enum class DriverMode {
  single_point,    // n = 1
  zero_cost,       // ||C||_inf = 0
  coarse_epsilon,  // epsilon >= ||C||_inf: r c^T is already epsilon-optimal
  sinkhorn,
};

inline std::string to_string(DriverMode m) {
  switch (m) {
    case DriverMode::single_point: return "single_point";
    case DriverMode::zero_cost: return "zero_cost";
    case DriverMode::coarse_epsilon: return "coarse_epsilon";
    case DriverMode::sinkhorn: return "sinkhorn";
  }
  return "?";
}

/// Smallest epsilon with 4 ||C||_inf ln n / epsilon <= 25.
inline double min_feasible_epsilon(double c_inf, std::size_t n) {
  return 4.0 * c_inf * std::log(static_cast<double>(n)) / kPrecisionEnvelope;
}

struct DriverParameters {
  DriverMode mode = DriverMode::sinkhorn;
  std::size_t n = 0;
  double epsilon = 0.0;
  double c_inf = 0.0;
  double gamma = 0.0;         // epsilon / (4 ln n)
  double eps0 = 0.0;          // epsilon / (8 ||C||_inf)
  double sinkhorn_tol = 0.0;  // eps0 / 2
  Vector r_tilde;
  Vector c_tilde;
  bool within_envelope = true;
  double min_epsilon = 0.0;
};

/// (1 - eps0/8) (m + eps0 / (n (8 - eps0)) 1).
inline Vector smooth_marginal(std::span<const double> m, double eps0) {
  const double n = static_cast<double>(m.size());
  const double shift = eps0 / (n * (8.0 - eps0));
  Vector out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = (1.0 - eps0 / 8.0) * (m[i] + shift);
  return out;
}

/// Parameter choices of the ApproxOT driver. Never throws on the envelope;
/// `within_envelope` reports it.
inline DriverParameters driver_parameters(const SparseMatrix& cost, std::span<const double> r,
                                          std::span<const double> c, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw ValidationError("epsilon must be positive and finite");
  validate_cost(cost);
  const std::size_t n = cost.n_rows();
  if (r.size() != n || c.size() != n) throw DimensionError("marginal length does not match cost");
  validate_marginal(r, "r");
  validate_marginal(c, "c");

  DriverParameters d;
  d.n = n;
  d.epsilon = epsilon;
  d.c_inf = cost.max_abs();
  if (n == 1) {
    d.mode = DriverMode::single_point;
    return d;
  }
  d.gamma = epsilon / (4.0 * std::log(static_cast<double>(n)));
  if (d.c_inf == 0.0) {
    d.mode = DriverMode::zero_cost;
    return d;
  }
  d.eps0 = epsilon / (8.0 * d.c_inf);
  d.min_epsilon = min_feasible_epsilon(d.c_inf, n);
  d.within_envelope = d.c_inf / d.gamma <= kPrecisionEnvelope * (1.0 + 1e-12);
  if (epsilon >= d.c_inf) {
    d.mode = DriverMode::coarse_epsilon;
    return d;
  }
  d.mode = DriverMode::sinkhorn;
  d.sinkhorn_tol = d.eps0 / 2.0;
  d.r_tilde = smooth_marginal(r, d.eps0);
  d.c_tilde = smooth_marginal(c, d.eps0);
  return d;
}

struct OtSolution {
  ImplicitPlan plan;
  double cost = 0.0;
  double epsilon = 0.0;
  double gamma = 0.0;
  double eps0 = 0.0;
  DriverMode mode = DriverMode::sinkhorn;
  bool degenerate = false;
  bool symmetric = false;
  SinkhornReport sinkhorn_report;
  Vector r_tilde;
  Vector c_tilde;
};

namespace detail {

/// r c^T carried by the flat kernel: u = ln r, v = ln c.
inline ImplicitPlan product_plan(std::span<const double> r, std::span<const double> c) {
  ImplicitPlan plan;
  plan.kernel = std::make_shared<const ImplicitKernel>(flat_kernel(r.size()));
  plan.u.resize(r.size());
  plan.v.resize(c.size());
  for (std::size_t i = 0; i < r.size(); ++i) plan.u[i] = std::log(r[i]);
  for (std::size_t j = 0; j < c.size(); ++j) plan.v[j] = std::log(c[j]);
  plan.x_scale.assign(r.size(), 1.0);
  plan.y_scale.assign(c.size(), 1.0);
  plan.p.assign(r.size(), 0.0);
  plan.q.assign(c.size(), 0.0);
  return plan;
}

inline void require_envelope(const DriverParameters& d) {
  if (!d.within_envelope)
    throw PrecisionEnvelopeError(
        "epsilon = " + std::to_string(d.epsilon) + " gives ||C||_inf / gamma = " +
            std::to_string(d.c_inf / d.gamma) + " > 25; the smallest feasible epsilon is " +
            std::to_string(d.min_epsilon),
        d.min_epsilon);
}

inline bool short_circuit(const DriverParameters& d, const SparseMatrix& cost,
                          std::span<const double> r, std::span<const double> c, OtSolution& out) {
  out.epsilon = d.epsilon;
  out.gamma = d.gamma;
  out.eps0 = d.eps0;
  out.mode = d.mode;
  if (d.mode == DriverMode::sinkhorn) return false;
  out.degenerate = d.mode == DriverMode::zero_cost;
  out.plan = product_plan(r, c);
  out.cost = plan_cost(out.plan, cost);
  return true;
}

}  // namespace detail

/**
 * epsilon-approximate OT: gamma = eps / (4 ln n), eps0 = eps / (8 ||C||_inf),
 * Sinkhorn on smoothed marginals to eps0 / 2, then rounding against the
 * original (r, c).
 */
inline OtSolution approx_ot(const SparseMatrix& cost, std::span<const double> r,
                            std::span<const double> c, double epsilon,
                            const SinkhornOptions& opt = {}) {
  const DriverParameters d = driver_parameters(cost, r, c, epsilon);
  OtSolution out;
  if (detail::short_circuit(d, cost, r, c, out)) return out;
  detail::require_envelope(d);

  auto kernel = std::make_shared<const ImplicitKernel>(build_kernel(cost, d.gamma));
  auto [state, report] = sinkhorn(*kernel, d.r_tilde, d.c_tilde, d.sinkhorn_tol, opt);
  out.plan = round_to_polytope(kernel, state.u, state.v, r, c);
  out.cost = plan_cost(out.plan, cost);
  out.sinkhorn_report = std::move(report);
  out.r_tilde = d.r_tilde;
  out.c_tilde = d.c_tilde;
  return out;
}

/// Symmetric driver for c = r and exactly symmetric C.
inline OtSolution approx_ot_symmetric(const SparseMatrix& cost, std::span<const double> r,
                                      double epsilon, const SinkhornOptions& opt = {}) {
  if (!cost.is_symmetric()) throw ValidationError("symmetric driver needs a symmetric cost matrix");
  const DriverParameters d = driver_parameters(cost, r, r, epsilon);
  OtSolution out;
  out.symmetric = true;
  if (detail::short_circuit(d, cost, r, r, out)) return out;
  detail::require_envelope(d);

  auto kernel = std::make_shared<const ImplicitKernel>(build_kernel(cost, d.gamma));
  // One-sided gap below eps0/4 is a two-sided gap below eps0/2.
  auto res = sinkhorn_symmetric(*kernel, d.r_tilde, d.eps0 / 4.0, opt);
  out.plan = round_symmetric(kernel, res.u, r);
  out.cost = plan_cost(out.plan, cost);
  out.sinkhorn_report = std::move(res.report);
  out.r_tilde = d.r_tilde;
  out.c_tilde = d.r_tilde;
  return out;
}

}  // namespace tws
