#pragma once

// Elimination orders, symbolic and numeric sparse Cholesky, fill accounting.
//
// Permutation convention: perm[k] is the vertex eliminated at step k, and
// the permuted matrix is (P^T A P)(k, l) = A(perm[k], perm[l]).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tws/error.hpp"
#include "tws/instance.hpp"
#include "tws/sparse.hpp"

namespace tws {

enum class OrderMethod { natural, min_degree, reverse_construction, custom };

inline std::string to_string(OrderMethod m) {
  switch (m) {
    case OrderMethod::natural: return "natural";
    case OrderMethod::min_degree: return "min_degree";
    case OrderMethod::reverse_construction: return "reverse_construction";
    case OrderMethod::custom: return "custom";
  }
  return "?";
}

struct EliminationOrder {
  std::vector<std::size_t> permutation;
  OrderMethod method = OrderMethod::custom;

  std::size_t size() const noexcept { return permutation.size(); }

  /// Throws unless the permutation is a bijection on [0, n).
  void validate(std::size_t n) const {
    if (permutation.size() != n)
      throw ValidationError("elimination order has length " + std::to_string(permutation.size()) +
                            ", expected " + std::to_string(n));
    std::vector<char> seen(n, 0);
    for (std::size_t v : permutation) {
      if (v >= n || seen[v]) throw ValidationError("elimination order is not a permutation");
      seen[v] = 1;
    }
  }

  /// positions()[v] = step at which v is eliminated.
  std::vector<std::size_t> positions() const {
    std::vector<std::size_t> pos(permutation.size());
    for (std::size_t k = 0; k < permutation.size(); ++k) pos[permutation[k]] = k;
    return pos;
  }
};

inline EliminationOrder natural_order(std::size_t n) {
  EliminationOrder ord{std::vector<std::size_t>(n), OrderMethod::natural};
  std::iota(ord.permutation.begin(), ord.permutation.end(), std::size_t{0});
  return ord;
}

/// n-1, ..., 0. A perfect elimination order for graphs from gen_tau_tree.
inline EliminationOrder reverse_construction_order(std::size_t n) {
  EliminationOrder ord{std::vector<std::size_t>(n), OrderMethod::reverse_construction};
  for (std::size_t k = 0; k < n; ++k) ord.permutation[k] = n - 1 - k;
  return ord;
}

/// Greedy minimum degree on the elimination graph; ties go to the lowest
/// vertex index.
inline EliminationOrder min_degree_order(const SupportGraph& g) {
  const std::size_t n = g.n();
  auto adj = g.adjacency();
  std::set<std::pair<std::size_t, std::size_t>> queue;
  for (std::size_t v = 0; v < n; ++v) queue.emplace(adj[v].size(), v);

  EliminationOrder ord{{}, OrderMethod::min_degree};
  ord.permutation.reserve(n);
  std::vector<std::size_t> merged;
  while (!queue.empty()) {
    const std::size_t v = queue.begin()->second;
    queue.erase(queue.begin());
    ord.permutation.push_back(v);
    const std::vector<std::size_t> nbrs = std::move(adj[v]);
    adj[v].clear();
    // Neighbours of v become a clique.
    for (std::size_t u : nbrs) {
      queue.erase({adj[u].size(), u});
      merged.clear();
      std::set_union(adj[u].begin(), adj[u].end(), nbrs.begin(), nbrs.end(),
                     std::back_inserter(merged));
      std::erase_if(merged, [&](std::size_t w) { return w == u || w == v; });
      adj[u].swap(merged);
      queue.emplace(adj[u].size(), u);
    }
  }
  return ord;
}

struct SymbolicFactor {
  SparseMatrix pattern;             // lower triangular, permuted coordinates, values 1
  std::size_t fill_count = 0;       // nnz(pattern) - (edges + n)
  std::vector<std::size_t> parent;  // elimination tree; npos marks a root
  std::size_t max_column_nnz = 0;

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

/// Exact fill pattern of L for the given order, built column by column from
/// the original adjacency plus the structures of elimination-tree children.
inline SymbolicFactor symbolic_cholesky(const SupportGraph& g, const EliminationOrder& ord) {
  const std::size_t n = g.n();
  ord.validate(n);
  const auto pos = ord.positions();
  const auto adj = g.adjacency();

  std::vector<std::vector<std::size_t>> below(n), children(n);
  std::vector<std::size_t> marker(n, SymbolicFactor::npos);
  SymbolicFactor out;
  out.parent.assign(n, SymbolicFactor::npos);

  for (std::size_t j = 0; j < n; ++j) {
    marker[j] = j;
    auto& list = below[j];
    for (std::size_t w : adj[ord.permutation[j]]) {
      const std::size_t pj = pos[w];
      if (pj > j && marker[pj] != j) {
        marker[pj] = j;
        list.push_back(pj);
      }
    }
    for (std::size_t c : children[j]) {
      for (std::size_t row : below[c]) {
        if (row > j && marker[row] != j) {
          marker[row] = j;
          list.push_back(row);
        }
      }
    }
    std::sort(list.begin(), list.end());
    if (!list.empty()) {
      out.parent[j] = list.front();
      children[list.front()].push_back(j);
    }
  }

  std::vector<std::size_t> starts(n + 1, 0), rows;
  for (std::size_t j = 0; j < n; ++j) {
    starts[j + 1] = starts[j] + below[j].size() + 1;
    out.max_column_nnz = std::max(out.max_column_nnz, below[j].size() + 1);
  }
  rows.reserve(starts[n]);
  for (std::size_t j = 0; j < n; ++j) {
    rows.push_back(j);
    rows.insert(rows.end(), below[j].begin(), below[j].end());
  }
  const std::size_t nnz = rows.size();
  out.pattern = SparseMatrix::from_compressed(n, n, std::move(starts), std::move(rows),
                                              Vector(nnz, 1.0));
  out.fill_count = nnz - (g.edge_count() + n);
  return out;
}

/// Largest number of later neighbours of an eliminated vertex in the fill
/// graph. Upper-bounds the treewidth.
inline std::size_t width_of_order(const SupportGraph& g, const EliminationOrder& ord) {
  const auto sym = symbolic_cholesky(g, ord);
  return sym.max_column_nnz ? sym.max_column_nnz - 1 : 0;
}

/// Sum over columns of (column nnz)^2.
inline std::size_t factorization_cost(const SparseMatrix& pattern) {
  std::size_t total = 0;
  for (std::size_t j = 0; j < pattern.n_cols(); ++j) {
    const std::size_t c = pattern.column_nnz(j);
    total += c * c;
  }
  return total;
}

struct CholeskyFactor {
  SparseMatrix L;  // permuted coordinates
  EliminationOrder permutation;
  std::size_t fill_count = 0;
  std::size_t max_column_nnz = 0;
};

/// L L^T = P^T (A + shift I) P on the symbolic pattern. A must be exactly
/// symmetric; a pivot <= 0 throws FactorizationError with its step index.
inline CholeskyFactor numeric_cholesky(const SparseMatrix& a, const EliminationOrder& ord,
                                       double diag_shift = 0.0) {
  if (a.n_rows() != a.n_cols()) throw DimensionError("numeric_cholesky: matrix must be square");
  if (!a.is_symmetric()) throw ValidationError("numeric_cholesky: matrix must be symmetric");
  const std::size_t n = a.n_rows();
  ord.validate(n);
  const SymbolicFactor sym = symbolic_cholesky(support_graph_of(a), ord);
  const auto pos = ord.positions();

  std::vector<std::size_t> starts(sym.pattern.column_starts().begin(),
                                  sym.pattern.column_starts().end());
  std::vector<std::size_t> rows(sym.pattern.row_indices().begin(), sym.pattern.row_indices().end());
  Vector vals(rows.size(), 0.0);

  auto slot = [&](std::size_t i, std::size_t j) {
    const auto first = rows.begin() + static_cast<std::ptrdiff_t>(starts[j]);
    const auto last = rows.begin() + static_cast<std::ptrdiff_t>(starts[j + 1]);
    return static_cast<std::size_t>(std::lower_bound(first, last, i) - rows.begin());
  };

  const auto as = a.column_starts();
  const auto ar = a.row_indices();
  const auto av = a.values();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = as[j]; p < as[j + 1]; ++p) {
      const std::size_t pi = pos[ar[p]], pj = pos[j];
      if (pi >= pj) vals[slot(pi, pj)] = av[p];
    }
  }
  for (std::size_t j = 0; j < n; ++j) vals[starts[j]] += diag_shift;

  std::vector<std::size_t> where(n, SymbolicFactor::npos);
  for (std::size_t j = 0; j < n; ++j) {
    const double d = vals[starts[j]];
    if (!(d > 0.0))
      throw FactorizationError("nonpositive pivot at step " + std::to_string(j), j);
    const double ljj = std::sqrt(d);
    vals[starts[j]] = ljj;
    for (std::size_t p = starts[j] + 1; p < starts[j + 1]; ++p) vals[p] /= ljj;

    // Right-looking update of every later column k in struct(L_j).
    for (std::size_t a_ = starts[j] + 1; a_ < starts[j + 1]; ++a_) {
      const std::size_t k = rows[a_];
      const double lk = vals[a_];
      for (std::size_t q = starts[k]; q < starts[k + 1]; ++q) where[rows[q]] = q;
      for (std::size_t b = a_; b < starts[j + 1]; ++b) {
        const std::size_t target = where[rows[b]];
        if (target == SymbolicFactor::npos)
          throw FactorizationError("symbolic pattern missing fill entry", j);
        vals[target] -= vals[b] * lk;
      }
      for (std::size_t q = starts[k]; q < starts[k + 1]; ++q) where[rows[q]] = SymbolicFactor::npos;
    }
  }

  CholeskyFactor out;
  out.fill_count = sym.fill_count;
  out.max_column_nnz = sym.max_column_nnz;
  out.permutation = ord;
  // Exact cancellation to zero is dropped like everywhere else.
  out.L = SparseMatrix::from_compressed(n, n, std::move(starts), std::move(rows), std::move(vals));
  return out;
}

/// Graph Laplacian D - W with unit edge weights.
inline SparseMatrix graph_laplacian(const SupportGraph& g) {
  std::vector<Triplet> t;
  std::vector<double> deg(g.n(), 0.0);
  for (const auto& [a, b] : g.edges()) {
    t.push_back({a, b, -1.0});
    t.push_back({b, a, -1.0});
    deg[a] += 1.0;
    deg[b] += 1.0;
  }
  for (std::size_t i = 0; i < g.n(); ++i) t.push_back({i, i, deg[i]});
  return SparseMatrix::from_triplets(t, g.n(), g.n());
}

}  // namespace tws
