#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "tws/instance.hpp"
#include "tws/oracle.hpp"
#include "tws/random.hpp"

using namespace tws;

namespace {

SparseMatrix random_cost(Rng& rng, std::size_t n, double density) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (rng.uniform() < density) t.push_back({i, j, rng.uniform(0.0, 1.0)});
  return SparseMatrix::from_triplets(t, n, n);
}

// Solve a basis given as a spanning tree of K_{n,n} by peeling leaves.
std::optional<DenseMatrix> basis_plan(const std::vector<std::pair<std::size_t, std::size_t>>& cells,
                                      const Vector& r, const Vector& c) {
  const std::size_t n = r.size();
  std::vector<std::size_t> parent(2 * n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [i, j] : cells) {
    const std::size_t a = find(i), b = find(n + j);
    if (a == b) return std::nullopt;
    parent[a] = b;
  }
  DenseMatrix x(n, n, 0.0);
  Vector rr = r, cc = c;
  std::vector<bool> done(cells.size(), false);
  for (std::size_t round = 0; round < cells.size(); ++round) {
    bool progressed = false;
    for (std::size_t side = 0; side < 2 && !progressed; ++side)
      for (std::size_t v = 0; v < n && !progressed; ++v) {
        std::size_t count = 0, which = 0;
        for (std::size_t e = 0; e < cells.size(); ++e)
          if (!done[e] && (side == 0 ? cells[e].first : cells[e].second) == v) {
            ++count;
            which = e;
          }
        if (count != 1) continue;
        const auto [i, j] = cells[which];
        const double amount = side == 0 ? rr[i] : cc[j];
        x(i, j) = amount;
        rr[i] -= amount;
        cc[j] -= amount;
        done[which] = true;
        progressed = true;
      }
    if (!progressed) return std::nullopt;
  }
  for (double v : x.data())
    if (v < -1e-12) return std::nullopt;
  return x;
}

// Minimum over all basic feasible solutions of a 3x3 problem.
double enumerate_optimum(const SparseMatrix& cost, const Vector& r, const Vector& c) {
  const DenseMatrix cd = cost.to_dense();
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << 9); ++mask) {
    if (__builtin_popcount(mask) != 5) continue;
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t b = 0; b < 9; ++b)
      if (mask & (1u << b)) cells.push_back({b / 3, b % 3});
    const auto x = basis_plan(cells, r, c);
    if (!x) continue;
    double cost_x = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) cost_x += cd(i, j) * (*x)(i, j);
    best = std::min(best, cost_x);
  }
  return best;
}

void check_plan_feasible(const DenseMatrix& p, const Vector& r, const Vector& c) {
  const Vector rs = p.row_sums(), cs = p.col_sums();
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(rs[i] - r[i]) <= 1e-12);
  for (std::size_t j = 0; j < c.size(); ++j) CHECK(std::abs(cs[j] - c[j]) <= 1e-12);
  for (double x : p.data()) CHECK(x >= -1e-15);
}

}  // namespace

TEST_CASE("dense_sinkhorn", "[oracle]") {
  CHECK(dense_sinkhorn(SparseMatrix(1, 1), 1.0, Vector{1.0}, Vector{1.0}, 0.1, 10).k == 0);
  const Vector u4(4, 0.25);
  CHECK(dense_sinkhorn(SparseMatrix(4, 4), 1.0, u4, u4, 1e-8, 10).k <= 2);
  CHECK_THROWS_AS(dense_sinkhorn(SparseMatrix(600, 600), 1.0, Vector(600, 1.0 / 600), Vector(600, 1.0 / 600),
                                 0.1, 10),
                  CapacityError);
  InstanceSpec s;
  s.family = Family::tau_tree;
  s.n = 12;
  s.tau = 2;
  s.seed = 1;
  const auto inst = generate_instance(s);
  CHECK_THROWS_AS(dense_sinkhorn(inst.cost, inst.cost.max_abs() / 20, inst.r, inst.c, 1e-12, 1),
                  ConvergenceError);
}

TEST_CASE("exact_ot small cases", "[oracle]") {
  SECTION("zero cost") {
    const Vector r{0.2, 0.3, 0.5}, c{0.4, 0.4, 0.2};
    const auto res = exact_ot(SparseMatrix(3, 3), r, c);
    CHECK(res.cost == 0.0);
    check_plan_feasible(res.plan, r, c);
    for (double a : res.cert.alpha) CHECK(a == 0.0);
    for (double b : res.cert.beta) CHECK(b == 0.0);
  }
  SECTION("n = 2 antidiagonal") {
    const std::vector<Triplet> t{{0, 1, 1.0}, {1, 0, 1.0}};
    const Vector r{0.5, 0.5};
    const auto res = exact_ot(SparseMatrix::from_triplets(t, 2, 2), r, r);
    CHECK(res.cost == 0.0);
    CHECK(res.plan(0, 0) == 0.5);
    CHECK(res.plan(1, 1) == 0.5);
    CHECK(res.plan(0, 1) == 0.0);
  }
}

TEST_CASE("exact_ot matches basis enumeration on 3x3", "[oracle][property]") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cost = random_cost(rng, 3, 0.7);
    const Vector r = random_simplex(3, 0.01, 2 * trial + 1), c = random_simplex(3, 0.01, 2 * trial + 2);
    const auto res = exact_ot(cost, r, c);
    const double oracle = enumerate_optimum(cost, r, c);
    CHECK(std::abs(res.cost - oracle) <= 1e-12);
    check_plan_feasible(res.plan, r, c);
    CHECK(verify_dual_certificate(cost, r, c, res.cost, res.cert));
  }
}

TEST_CASE("exact_ot certificates on larger instances", "[oracle][property]") {
  Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 4 + rng.index(30);
    const auto cost = random_cost(rng, n, 0.5);
    const Vector r = random_simplex(n, 1e-4, 1000 + trial), c = random_simplex(n, 1e-4, 2000 + trial);
    const auto res = exact_ot(cost, r, c);
    check_plan_feasible(res.plan, r, c);
    CHECK(verify_dual_certificate(cost, r, c, res.cost, res.cert));
    double primal = 0.0;
    for (const auto& t : cost.to_triplets()) primal += t.value * res.plan(t.row, t.col);
    CHECK(std::abs(primal - res.cost) <= 1e-12);
  }
}

TEST_CASE("verify_dual_certificate", "[oracle]") {
  Rng rng(3);
  const auto cost = random_cost(rng, 6, 0.9);
  const Vector r = random_simplex(6, 0.01, 1), c = random_simplex(6, 0.01, 2);
  const auto res = exact_ot(cost, r, c);
  CHECK(verify_dual_certificate(cost, r, c, res.cost, res.cert));
  auto bad = res.cert;
  bad.alpha[2] += cost.max_abs();
  CHECK_FALSE(verify_dual_certificate(cost, r, c, res.cost, bad));

  DualCertificate zero{Vector(3, 0.0), Vector(3, 0.0), 0.0};
  const Vector u3(3, 1.0 / 3);
  CHECK(verify_dual_certificate(SparseMatrix(3, 3), u3, u3, 0.0, zero));
  const std::vector<Triplet> full{{0, 1, 1.0}, {0, 2, 1.0}, {1, 0, 1.0}, {1, 2, 1.0},
                                  {2, 0, 1.0}, {2, 1, 1.0}, {0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}};
  const auto ones = SparseMatrix::from_triplets(full, 3, 3);
  CHECK_FALSE(verify_dual_certificate(ones, u3, u3, exact_ot(ones, u3, u3).cost, zero));
}

TEST_CASE("entropy", "[oracle]") {
  for (std::size_t n : {1u, 2u, 7u, 50u}) {
    CHECK(std::abs(entropy(Vector(n, 1.0 / n)) - std::log(static_cast<double>(n))) <= 1e-13);
    DenseMatrix u(n, n, 1.0 / static_cast<double>(n * n));
    CHECK(std::abs(entropy(u) - 2.0 * std::log(static_cast<double>(n))) <= 1e-12);
  }
  CHECK(entropy(Vector{0.0, 1.0, 0.0}) == 0.0);
}
