#pragma once

// Problem instances: support graphs with known treewidth, cost matrices on
// those supports, and marginals on the probability simplex.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tws/error.hpp"
#include "tws/random.hpp"
#include "tws/sparse.hpp"

namespace tws {

using Edge = std::pair<std::size_t, std::size_t>;

/// Simple undirected graph. Edges are stored once with first < second;
/// self-loops are not representable (the cost diagonal is handled apart).
class SupportGraph {
 public:
  SupportGraph() = default;

  SupportGraph(std::size_t n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
    for (auto& [a, b] : edges_) {
      if (a >= n_ || b >= n_) throw ConstructionError("edge endpoint out of range");
      if (a == b) throw ConstructionError("self-loop in support graph");
      if (a > b) std::swap(a, b);
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
      throw ConstructionError("duplicate edge in support graph");
  }

  std::size_t n() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  /// Sorted neighbour lists.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(n_);
    for (const auto& [a, b] : edges_) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
  }

  std::size_t max_degree() const {
    std::vector<std::size_t> deg(n_, 0);
    for (const auto& [a, b] : edges_) {
      ++deg[a];
      ++deg[b];
    }
    return n_ ? *std::max_element(deg.begin(), deg.end()) : 0;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
};

/// Off-diagonal sparsity pattern of a square matrix, symmetrized.
inline SupportGraph support_graph_of(const SparseMatrix& a) {
  if (a.n_rows() != a.n_cols()) throw DimensionError("support graph needs a square matrix");
  std::vector<Edge> edges;
  const auto starts = a.column_starts();
  const auto rows = a.row_indices();
  for (std::size_t j = 0; j < a.n_cols(); ++j)
    for (std::size_t p = starts[j]; p < starts[j + 1]; ++p)
      if (rows[p] != j) edges.emplace_back(std::min(rows[p], j), std::max(rows[p], j));
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return SupportGraph(a.n_rows(), std::move(edges));
}

/// Path 0-1-...-(n-1); treewidth 1 for n >= 2.
inline SupportGraph gen_path(std::size_t n) {
  if (n == 0) throw ValidationError("gen_path: n must be at least 1");
  std::vector<Edge> edges;
  edges.reserve(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return SupportGraph(n, std::move(edges));
}

/// w x h grid, vertex (x, y) -> y * w + x; treewidth min(w, h).
inline SupportGraph gen_grid(std::size_t w, std::size_t h) {
  if (w == 0 || h == 0) throw ValidationError("gen_grid: dimensions must be positive");
  std::vector<Edge> edges;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t v = y * w + x;
      if (x + 1 < w) edges.emplace_back(v, v + 1);
      if (y + 1 < h) edges.emplace_back(v, v + w);
    }
  }
  return SupportGraph(w * h, std::move(edges));
}

inline SupportGraph gen_clique(std::size_t k) {
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) edges.emplace_back(a, b);
  return SupportGraph(k, std::move(edges));
}

/**
 * Random tau-tree on n vertices.
 *
 * Vertices 0..tau form the initial clique; vertex t > tau is attached to a
 * tau-clique drawn uniformly from all tau-cliques created so far. Vertices
 * are created in index order, so eliminating n-1, n-2, ..., 0 is a perfect
 * elimination order (see `reverse_construction_order`).
 */
inline SupportGraph gen_tau_tree(std::size_t n, std::size_t tau, std::uint64_t seed) {
  if (n < tau + 1) throw ValidationError("gen_tau_tree: need n >= tau + 1");
  std::vector<Edge> edges = gen_clique(tau + 1).edges();
  if (tau == 0) return SupportGraph(n, {});

  Rng rng(seed);
  // All tau-subsets of the base clique.
  std::vector<std::vector<std::size_t>> cliques;
  for (std::size_t skip = 0; skip <= tau; ++skip) {
    std::vector<std::size_t> c;
    for (std::size_t v = 0; v <= tau; ++v)
      if (v != skip) c.push_back(v);
    cliques.push_back(std::move(c));
  }
  for (std::size_t v = tau + 1; v < n; ++v) {
    const std::vector<std::size_t> base = cliques[rng.index(cliques.size())];
    for (std::size_t w : base) edges.emplace_back(w, v);
    for (std::size_t drop = 0; drop < tau; ++drop) {
      std::vector<std::size_t> c;
      c.reserve(tau);
      for (std::size_t q = 0; q < tau; ++q)
        if (q != drop) c.push_back(base[q]);
      c.push_back(v);
      cliques.push_back(std::move(c));
    }
  }
  return SupportGraph(n, std::move(edges));
}

/// Edge count of any tau-tree on n vertices: C(tau+1, 2) + tau (n - tau - 1).
constexpr std::size_t tau_tree_edge_count(std::size_t n, std::size_t tau) {
  return tau * (tau + 1) / 2 + tau * (n - tau - 1);
}

/**
 * Symmetric cost matrix on the support of `g`: off-diagonal weights drawn
 * uniformly from [weight_low, weight_high] (both orientations share the
 * draw), diagonal set to `diag_value`. Zero values are not stored.
 */
inline SparseMatrix cost_from_support(const SupportGraph& g, double diag_value, double weight_low,
                                      double weight_high, std::uint64_t seed) {
  if (!(weight_low >= 0.0) || !(weight_high >= weight_low) || !(diag_value >= 0.0) ||
      !std::isfinite(weight_high) || !std::isfinite(diag_value))
    throw ValidationError("cost_from_support: need 0 <= weight_low <= weight_high and diag >= 0");
  Rng rng(seed);
  std::vector<Triplet> t;
  t.reserve(2 * g.edge_count() + g.n());
  for (const auto& [a, b] : g.edges()) {
    const double w = rng.uniform(weight_low, weight_high);
    t.push_back({a, b, w});
    t.push_back({b, a, w});
  }
  for (std::size_t i = 0; i < g.n(); ++i) t.push_back({i, i, diag_value});
  return SparseMatrix::from_triplets(t, g.n(), g.n());
}

/// Random point of the simplex with every entry >= min_mass.
inline Vector random_simplex(std::size_t n, double min_mass, std::uint64_t seed) {
  if (n == 0) throw ValidationError("random_simplex: n must be positive");
  if (!(min_mass > 0.0) || min_mass * static_cast<double>(n) > 1.0 + 1e-15)
    throw ValidationError("random_simplex: need 0 < min_mass <= 1/n");
  const double free_mass = std::max(0.0, 1.0 - min_mass * static_cast<double>(n));
  Rng rng(seed);
  Vector w(n);
  for (auto& x : w) x = rng.exponential();
  const double total = sum(w);
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = min_mass + free_mass * (w[i] / total);
  // Put the rounding residue on the largest entry so the sum is 1 to ~1 ulp.
  const double residue = 1.0 - sum(out);
  *std::max_element(out.begin(), out.end()) += residue;
  return out;
}

/// Tolerance on |sum - 1| accepted for marginals.
inline constexpr double kSimplexTolerance = 1e-12;

inline void validate_marginal(std::span<const double> m, const std::string& name) {
  if (m.empty()) throw ValidationError(name + " is empty");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m[i]) || !(m[i] > 0.0))
      throw ValidationError(name + "[" + std::to_string(i) + "] is not strictly positive");
  }
  const double s = sum(m);
  if (std::abs(s - 1.0) > kSimplexTolerance)
    throw ValidationError(name + " sums to " + std::to_string(s) + ", expected 1");
}

inline void validate_cost(const SparseMatrix& c) {
  if (c.n_rows() != c.n_cols()) throw ValidationError("cost matrix must be square");
  for (double v : c.values()) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("cost entries must be finite and >= 0");
  }
  if (!c.has_symmetric_pattern()) throw ValidationError("cost support must be symmetric");
}

enum class Family { path, grid, tau_tree };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::path: return "path";
    case Family::grid: return "grid";
    case Family::tau_tree: return "tau_tree";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "path") return Family::path;
  if (s == "grid") return Family::grid;
  if (s == "tau_tree" || s == "tau-tree") return Family::tau_tree;
  throw ValidationError("unknown family '" + s + "' (expected path, grid or tau_tree)");
}

struct ProblemInstance {
  SparseMatrix cost;
  Vector r;
  Vector c;
  std::optional<std::size_t> declared_treewidth;
  std::uint64_t seed = 0;
  std::string family;

  std::size_t n() const noexcept { return cost.n_rows(); }
};

inline void validate_instance(const ProblemInstance& inst) {
  validate_cost(inst.cost);
  if (inst.r.size() != inst.n() || inst.c.size() != inst.n())
    throw ValidationError("marginal lengths do not match the cost matrix");
  validate_marginal(inst.r, "r");
  validate_marginal(inst.c, "c");
}

struct InstanceSpec {
  Family family = Family::path;
  std::size_t n = 8;
  std::size_t tau = 1;       // tau_tree: treewidth; grid: width when width == 0
  std::size_t width = 0;     // grid only
  std::size_t height = 0;    // grid only
  double weight_low = 0.1;
  double weight_high = 1.0;
  double diag_value = 0.0;
  std::uint64_t seed = 1;
};

inline SupportGraph support_for(const InstanceSpec& s) {
  switch (s.family) {
    case Family::path: return gen_path(s.n);
    case Family::tau_tree: return gen_tau_tree(s.n, s.tau, s.seed);
    case Family::grid: {
      std::size_t w = s.width, h = s.height;
      if (w == 0 || h == 0) {
        if (s.tau == 0 || s.n % s.tau != 0)
          throw ValidationError("grid: give width/height, or n divisible by tau");
        w = s.tau;
        h = s.n / s.tau;
      }
      return gen_grid(w, h);
    }
  }
  throw ValidationError("unknown family");
}

/// Deterministic instance from (spec, seed): cost, then r and c from
/// derived seeds, marginal floor 1/(10n).
inline ProblemInstance generate_instance(const InstanceSpec& s) {
  const SupportGraph g = support_for(s);
  ProblemInstance inst;
  inst.family = to_string(s.family);
  inst.seed = s.seed;
  inst.cost = cost_from_support(g, s.diag_value, s.weight_low, s.weight_high, s.seed * 3 + 1);
  const double floor = 1.0 / (10.0 * static_cast<double>(g.n()));
  inst.r = random_simplex(g.n(), floor, s.seed * 3 + 2);
  inst.c = random_simplex(g.n(), floor, s.seed * 3 + 3);
  switch (s.family) {
    case Family::path: inst.declared_treewidth = g.n() >= 2 ? 1 : 0; break;
    case Family::tau_tree: inst.declared_treewidth = s.tau; break;
    case Family::grid: {
      std::size_t w = s.width ? s.width : s.tau;
      std::size_t h = s.height ? s.height : (s.tau ? s.n / s.tau : 0);
      inst.declared_treewidth = std::min(w, h);
      break;
    }
  }
  return inst;
}

}  // namespace tws
