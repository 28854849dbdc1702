#pragma once

// Implicit Gibbs kernel K = A + 1 1^T with A_ij = exp(-C_ij / gamma) - 1 on
// supp(C), and the O(nnz(A) + n) primitives on B(u, v) = diag(e^u) K diag(e^v).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tws/error.hpp"
#include "tws/instance.hpp"
#include "tws/sparse.hpp"

namespace tws {

/// Default size cap for anything that materializes an n x n matrix.
inline constexpr std::size_t kDenseCap = 512;

/// Ratio (1^T e^v) / (K e^v)_i above which the A + 11^T split is flagged.
inline constexpr double kCancellationWarning = 1e12;

struct ImplicitKernel {
  SparseMatrix A;
  Vector k_values;  // exp(-C_ij / gamma), aligned with A's storage
  Vector w;         // all ones
  double gamma = 1.0;
  std::size_t n = 0;
  double c_inf_norm = 0.0;
  bool symmetric = true;  // A bit-identical to its transpose
};

inline ImplicitKernel build_kernel(const SparseMatrix& cost, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw ValidationError("build_kernel: gamma must be positive and finite");
  validate_cost(cost);
  ImplicitKernel k;
  k.n = cost.n_rows();
  k.gamma = gamma;
  k.c_inf_norm = cost.max_abs();
  k.w.assign(k.n, 1.0);
  std::vector<std::size_t> starts(cost.column_starts().begin(), cost.column_starts().end());
  std::vector<std::size_t> rows(cost.row_indices().begin(), cost.row_indices().end());
  Vector vals(cost.values().begin(), cost.values().end());
  Vector kv(vals.size());
  for (std::size_t p = 0; p < vals.size(); ++p) {
    kv[p] = std::exp(-vals[p] / gamma);
    vals[p] = std::expm1(-vals[p] / gamma);
  }
  k.A = SparseMatrix::from_compressed(k.n, k.n, std::move(starts), std::move(rows),
                                      std::move(vals));
  if (k.A.nnz() != kv.size()) throw NumericRangeError("build_kernel: A lost entries to underflow");
  k.k_values = std::move(kv);
  k.symmetric = k.A.is_symmetric();
  return k;
}

/// Kernel of the all-zero cost: K = 11^T.
inline ImplicitKernel flat_kernel(std::size_t n) {
  ImplicitKernel k;
  k.n = n;
  k.A = SparseMatrix(n, n);
  k.w.assign(n, 1.0);
  return k;
}

namespace detail {

// Neumaier-compensated running sum; value is hi + lo.
struct CompensatedSum {
  double hi = 0.0;
  double lo = 0.0;

  void add(double x) {
    const double t = hi + x;
    lo += std::abs(hi) >= std::abs(x) ? (hi - t) + x : (x - t) + hi;
    hi = t;
  }
  double value() const { return hi + lo; }
};

/// a - b with both operands carried to roughly twice working precision.
inline double difference(const CompensatedSum& a, const CompensatedSum& b) {
  return (a.hi - b.hi) + (a.lo - b.lo);
}

/// out[i] = sum_{j in S_i} K_ij x_j + (1^T x - sum_{j in S_i} x_j), where S_i
/// is the stored pattern of row i (transpose = false) or column i (true).
/// This is A x + (1^T x) 1 regrouped so the rank-one part only loses the
/// mass outside the pattern, and that difference is taken in extended
/// precision.
inline Vector kernel_apply(const ImplicitKernel& k, std::span<const double> x, bool transpose) {
  CompensatedSum total;
  for (double xi : x) total.add(xi);
  Vector on(k.n, 0.0);
  std::vector<CompensatedSum> covered(k.n);
  const auto starts = k.A.column_starts();
  const auto rows = k.A.row_indices();
  for (std::size_t j = 0; j < k.n; ++j) {
    for (std::size_t p = starts[j]; p < starts[j + 1]; ++p) {
      const std::size_t i = rows[p];
      const std::size_t out = transpose ? j : i, in = transpose ? i : j;
      on[out] += k.k_values[p] * x[in];
      covered[out].add(x[in]);
    }
  }
  for (std::size_t i = 0; i < k.n; ++i) on[i] += difference(total, covered[i]);
  return on;
}

}  // namespace detail

/// K x, i.e. A x + (1^T x) 1.
inline Vector kernel_matvec(const ImplicitKernel& k, std::span<const double> x) {
  if (x.size() != k.n) throw DimensionError("kernel_matvec: x has wrong length");
  return detail::kernel_apply(k, x, false);
}

inline Vector kernel_matvec_transpose(const ImplicitKernel& k, std::span<const double> x) {
  if (x.size() != k.n) throw DimensionError("kernel_matvec_transpose: x has wrong length");
  return detail::kernel_apply(k, x, true);
}

/// Instrumentation for the work-scaling checks.
struct OpCount {
  std::size_t sparse = 0;  // stored entries of A visited
  std::size_t dense = 0;   // length-n element operations

  std::size_t total() const noexcept { return sparse + dense; }
  OpCount& operator+=(const OpCount& o) {
    sparse += o.sparse;
    dense += o.dense;
    return *this;
  }
};

struct ScaledMarginals {
  Vector row;  // B(u, v) 1
  Vector col;  // B(u, v)^T 1
  double max_cancellation = 1.0;  // max_i (1^T e^v) / (K e^v)_i, and the column analogue
};

/**
 * Row and column sums of B(u, v) in one pass over A.
 *
 * Work is nnz(A) sparse visits plus five length-n passes (e^u, e^v, row
 * finalize, column finalize, validation).
 */
inline ScaledMarginals scaled_marginals(const ImplicitKernel& k, std::span<const double> u,
                                        std::span<const double> v, OpCount* ops = nullptr) {
  const std::size_t n = k.n;
  if (u.size() != n || v.size() != n) throw DimensionError("scaled_marginals: wrong length");

  Vector eu(n), ev(n);
  detail::CompensatedSum su, sv;
  for (std::size_t i = 0; i < n; ++i) {
    eu[i] = std::exp(u[i]);
    su.add(eu[i]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    ev[j] = std::exp(v[j]);
    sv.add(ev[j]);
  }
  if (!std::isfinite(su.value()) || !std::isfinite(sv.value()))
    throw NumericRangeError("e^u or e^v overflowed; renormalize the gauge of (u, v)");

  ScaledMarginals m;
  m.row.assign(n, 0.0);
  m.col.assign(n, 0.0);
  std::vector<detail::CompensatedSum> row_cov(n), col_cov(n);
  const auto starts = k.A.column_starts();
  const auto rows = k.A.row_indices();
  const auto kv = std::span<const double>(k.k_values);
  for (std::size_t j = 0; j < n; ++j) {
    const double evj = ev[j];
    double acc = 0.0;
    for (std::size_t p = starts[j]; p < starts[j + 1]; ++p) {
      const std::size_t i = rows[p];
      m.row[i] += kv[p] * evj;
      row_cov[i].add(evj);
      acc += kv[p] * eu[i];
      col_cov[j].add(eu[i]);
    }
    m.col[j] = acc;
  }

  for (std::size_t i = 0; i < n; ++i) m.row[i] = eu[i] * (m.row[i] + detail::difference(sv, row_cov[i]));
  for (std::size_t j = 0; j < n; ++j) m.col[j] = ev[j] * (m.col[j] + detail::difference(su, col_cov[j]));

  double worst = 1.0;
  const double su_v = su.value(), sv_v = sv.value();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(m.row[i] > 0.0) || !(m.col[i] > 0.0) || !std::isfinite(m.row[i]) ||
        !std::isfinite(m.col[i]))
      throw NumericRangeError("nonpositive or non-finite marginal at index " + std::to_string(i) +
                              " (cancellation in A + 11^T)");
    worst = std::max({worst, eu[i] * sv_v / m.row[i], ev[i] * su_v / m.col[i]});
  }
  m.max_cancellation = worst;

  if (ops) {
    ops->sparse += k.A.nnz();
    ops->dense += 5 * n;
  }
  return m;
}

/// 1^T B(u, v) 1.
inline double total_mass(const ImplicitKernel& k, std::span<const double> u,
                         std::span<const double> v) {
  return sum(scaled_marginals(k, u, v).row);
}

inline void check_dense_cap(std::size_t n, std::size_t cap) {
  if (n > cap)
    throw CapacityError("dense materialization of n = " + std::to_string(n) +
                        " exceeds the cap of " + std::to_string(cap));
}

/// exp(-C_ij / gamma) over all n^2 entries; implicit zeros map to 1.
inline DenseMatrix dense_kernel(const SparseMatrix& cost, double gamma,
                                std::size_t cap = kDenseCap) {
  if (!(gamma > 0.0)) throw ValidationError("dense_kernel: gamma must be positive");
  if (cost.n_rows() != cost.n_cols()) throw DimensionError("dense_kernel: cost must be square");
  check_dense_cap(cost.n_rows(), cap);
  DenseMatrix k(cost.n_rows(), cost.n_cols(), 1.0);
  for (const auto& t : cost.to_triplets()) k(t.row, t.col) = std::exp(-t.value / gamma);
  return k;
}

/// The kernel the implicit representation stands for: K_ij on the pattern
/// of A, 1 elsewhere.
inline DenseMatrix kernel_to_dense(const ImplicitKernel& k, std::size_t cap = kDenseCap) {
  check_dense_cap(k.n, cap);
  DenseMatrix out(k.n, k.n, 1.0);
  const auto starts = k.A.column_starts();
  const auto rows = k.A.row_indices();
  for (std::size_t j = 0; j < k.n; ++j)
    for (std::size_t p = starts[j]; p < starts[j + 1]; ++p) out(rows[p], j) = k.k_values[p];
  return out;
}

/// diag(e^u) K diag(e^v), materialized.
inline DenseMatrix scaling_to_dense(const ImplicitKernel& k, std::span<const double> u,
                                    std::span<const double> v, std::size_t cap = kDenseCap) {
  if (u.size() != k.n || v.size() != k.n) throw DimensionError("scaling_to_dense: wrong length");
  DenseMatrix b = kernel_to_dense(k, cap);
  for (std::size_t i = 0; i < k.n; ++i)
    for (std::size_t j = 0; j < k.n; ++j) b(i, j) *= std::exp(u[i]) * std::exp(v[j]);
  return b;
}

}  // namespace tws
