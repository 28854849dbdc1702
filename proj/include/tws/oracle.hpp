#pragma once

// Reference implementations: dense Sinkhorn on a materialized kernel, exact
// OT by the transportation simplex with a dual certificate, and entropy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tws/error.hpp"
#include "tws/kernel.hpp"
#include "tws/sinkhorn.hpp"
#include "tws/sparse.hpp"

namespace tws {

inline constexpr std::size_t kExactCap = 256;

struct DenseSinkhornResult {
  Vector u;
  Vector v;
  std::size_t k = 0;
};

using DenseObserver =
    std::function<void(std::size_t k, std::span<const double> u, std::span<const double> v)>;

/// Alternating Sinkhorn on a prebuilt dense kernel, no gauge step.
inline DenseSinkhornResult dense_sinkhorn(const DenseMatrix& K, std::span<const double> r,
                                          std::span<const double> c, double eps0,
                                          std::size_t max_iter,
                                          const DenseObserver& observer = {}) {
  const std::size_t n = K.rows();
  if (K.cols() != n || r.size() != n || c.size() != n)
    throw DimensionError("dense_sinkhorn: shape mismatch");
  if (!(eps0 > 0.0)) throw ValidationError("dense_sinkhorn: eps0 must be positive");

  DenseSinkhornResult out;
  out.u.assign(n, 0.0);
  out.v.assign(n, 0.0);
  Vector eu(n), ev(n), row(n), col(n);
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) eu[i] = std::exp(out.u[i]);
    for (std::size_t j = 0; j < n; ++j) ev[j] = std::exp(out.v[j]);
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ki = K.row(i);
      double acc = 0.0;
      const double eui = eu[i];
      for (std::size_t j = 0; j < n; ++j) {
        acc += ki[j] * ev[j];
        col[j] += ki[j] * eui;
      }
      row[i] = eui * acc;
    }
    for (std::size_t j = 0; j < n; ++j) col[j] *= ev[j];
    for (std::size_t i = 0; i < n; ++i)
      if (!(row[i] > 0.0) || !(col[i] > 0.0) || !std::isfinite(row[i]) || !std::isfinite(col[i]))
        throw NumericRangeError("dense_sinkhorn: marginal left the positive finite range");

    if (observer) observer(out.k, out.u, out.v);
    if (l1_distance(row, r) + l1_distance(col, c) < eps0) break;
    if (out.k >= max_iter) {
      SinkhornState st{out.u, out.v, out.k, row, col, 0.0};
      throw ConvergenceError("dense_sinkhorn did not converge", std::move(st), {});
    }
    if (out.k % 2 == 0)
      for (std::size_t i = 0; i < n; ++i) out.u[i] += std::log(r[i]) - std::log(row[i]);
    else
      for (std::size_t j = 0; j < n; ++j) out.v[j] += std::log(c[j]) - std::log(col[j]);
    ++out.k;
  }
  return out;
}

inline DenseSinkhornResult dense_sinkhorn(const SparseMatrix& cost, double gamma,
                                          std::span<const double> r, std::span<const double> c,
                                          double eps0, std::size_t max_iter,
                                          const DenseObserver& observer = {},
                                          std::size_t cap = kDenseCap) {
  return dense_sinkhorn(dense_kernel(cost, gamma, cap), r, c, eps0, max_iter, observer);
}

struct DualCertificate {
  Vector alpha;
  Vector beta;
  double objective = 0.0;
};

struct ExactOtResult {
  DenseMatrix plan;
  double cost = 0.0;
  DualCertificate cert;
  std::size_t pivots = 0;
};

namespace detail {

// Basis of the transportation simplex as a spanning tree on m + k nodes:
// rows are 0..m-1, columns m..m+k-1.
struct TransportBasis {
  std::size_t m, k;
  std::vector<std::vector<std::size_t>> adj;  // node -> neighbour nodes

  TransportBasis(std::size_t m_, std::size_t k_) : m(m_), k(k_), adj(m_ + k_) {}

  void add(std::size_t i, std::size_t j) {
    adj[i].push_back(m + j);
    adj[m + j].push_back(i);
  }
  void remove(std::size_t i, std::size_t j) {
    std::erase(adj[i], m + j);
    std::erase(adj[m + j], i);
  }
};

}  // namespace detail

/**
 * Exact transportation LP by the primal simplex on the basis tree.
 *
 * Northwest-corner start, potentials from the tree, Bland's rule (first
 * improving cell in row-major order; lowest-index leaving cell among the
 * ties). Exhausting the pivot budget throws StallError.
 */
inline ExactOtResult exact_ot(const SparseMatrix& cost, std::span<const double> r,
                              std::span<const double> c, std::size_t cap = kExactCap) {
  const std::size_t m = cost.n_rows(), k = cost.n_cols();
  if (r.size() != m || c.size() != k) throw DimensionError("exact_ot: marginal length mismatch");
  check_dense_cap(std::max(m, k), cap);
  for (double x : r)
    if (!(x >= 0.0)) throw ValidationError("exact_ot: r must be nonnegative");
  for (double x : c)
    if (!(x >= 0.0)) throw ValidationError("exact_ot: c must be nonnegative");

  const DenseMatrix C = cost.to_dense();
  const double tol = 1e-12 * std::max(1.0, cost.max_abs());
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();

  DenseMatrix x(m, k, 0.0);
  std::vector<char> basic(m * k, 0);
  detail::TransportBasis tree(m, k);
  {
    Vector s(r.begin(), r.end()), d(c.begin(), c.end());
    std::size_t i = 0, j = 0;
    for (;;) {
      const double amt = std::min(s[i], d[j]);
      x(i, j) = amt;
      basic[i * k + j] = 1;
      tree.add(i, j);
      s[i] -= amt;
      d[j] -= amt;
      if (i == m - 1 && j == k - 1) break;
      if (i == m - 1) ++j;
      else if (j == k - 1) ++i;
      else if (s[i] < d[j]) ++i;
      else ++j;
    }
  }

  Vector alpha(m), beta(k);
  std::vector<std::size_t> parent(m + k), stack;
  auto potentials = [&] {
    std::vector<char> seen(m + k, 0);
    alpha[0] = 0.0;
    seen[0] = 1;
    stack.assign(1, 0);
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b : tree.adj[a]) {
        if (seen[b]) continue;
        seen[b] = 1;
        if (a < m) beta[b - m] = C(a, b - m) - alpha[a];
        else alpha[b] = C(b, a - m) - beta[a - m];
        stack.push_back(b);
      }
    }
  };

  ExactOtResult out;
  const std::size_t budget = 100 * m * k + 1000;
  for (;;) {
    potentials();
    std::size_t ei = none, ej = none;
    for (std::size_t i = 0; i < m && ei == none; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (!basic[i * k + j] && C(i, j) - alpha[i] - beta[j] < -tol) {
          ei = i;
          ej = j;
          break;
        }
      }
    }
    if (ei == none) break;
    if (++out.pivots > budget)
      throw StallError("exact_ot: pivot budget of " + std::to_string(budget) + " exhausted");

    // Tree path from row ei to column ej closes the cycle with the entering cell.
    std::fill(parent.begin(), parent.end(), none);
    parent[ei] = ei;
    stack.assign(1, ei);
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b : tree.adj[a]) {
        if (parent[b] != none) continue;
        parent[b] = a;
        stack.push_back(b);
      }
    }
    // Walk from column ej back to row ei; edges alternate -, +, -, ...
    std::vector<std::pair<std::size_t, std::size_t>> minus, plus;
    std::size_t node = m + ej;
    bool sign_minus = true;
    while (node != ei) {
      const std::size_t prev = parent[node];
      const std::size_t i = node < m ? node : prev;
      const std::size_t j = (node < m ? prev : node) - m;
      (sign_minus ? minus : plus).emplace_back(i, j);
      sign_minus = !sign_minus;
      node = prev;
    }
    double theta = std::numeric_limits<double>::infinity();
    for (const auto& [i, j] : minus) theta = std::min(theta, x(i, j));
    std::size_t li = none, lj = none;
    for (const auto& [i, j] : minus) {
      if (x(i, j) == theta && (li == none || i * k + j < li * k + lj)) {
        li = i;
        lj = j;
      }
    }
    for (const auto& [i, j] : minus) x(i, j) -= theta;
    for (const auto& [i, j] : plus) x(i, j) += theta;
    x(ei, ej) = theta;
    x(li, lj) = 0.0;
    basic[li * k + lj] = 0;
    tree.remove(li, lj);
    basic[ei * k + ej] = 1;
    tree.add(ei, ej);
  }

  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (x(i, j) < 0.0) x(i, j) = 0.0;  // -0 / rounding residue
      out.cost += x(i, j) * C(i, j);
    }
  out.plan = std::move(x);
  out.cert.alpha = alpha;
  out.cert.beta = beta;
  out.cert.objective = dot(alpha, r) + dot(beta, c);
  return out;
}

/// alpha_i + beta_j <= C_ij + tol everywhere, the certificate's objective
/// equals <alpha, r> + <beta, c>, and it matches `cost`, all within tol.
inline bool verify_dual_certificate(const SparseMatrix& cost, std::span<const double> r,
                                    std::span<const double> c, double primal_cost,
                                    const DualCertificate& cert, double tol = 1e-9) {
  const std::size_t m = cost.n_rows(), k = cost.n_cols();
  if (cert.alpha.size() != m || cert.beta.size() != k || r.size() != m || c.size() != k)
    return false;
  const auto cs = cost.column_starts();
  const auto cr = cost.row_indices();
  const auto cv = cost.values();
  Vector column(m);
  for (std::size_t j = 0; j < k; ++j) {
    std::fill(column.begin(), column.end(), 0.0);
    for (std::size_t p = cs[j]; p < cs[j + 1]; ++p) column[cr[p]] = cv[p];
    for (std::size_t i = 0; i < m; ++i)
      if (cert.alpha[i] + cert.beta[j] > column[i] + tol) return false;
  }
  const double dual = dot(cert.alpha, r) + dot(cert.beta, c);
  return std::abs(dual - cert.objective) <= tol && std::abs(cert.objective - primal_cost) <= tol;
}

/// Sum of p log(1/p) with 0 log(1/0) = 0.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x < 0.0) throw ValidationError("entropy: negative entry");
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

inline double entropy(const DenseMatrix& P) { return entropy(P.data()); }

}  // namespace tws
