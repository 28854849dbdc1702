#pragma once

// Invariant battery run by `tws verify` and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tws/kernel.hpp"
#include "tws/oracle.hpp"
#include "tws/sinkhorn.hpp"
#include "tws/transport.hpp"

namespace tws {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;  // observed quantity
  double bound = 0.0;  // limit it was compared against
  std::string detail;
};

inline Check make_check(std::string name, double value, double bound, std::string detail = {}) {
  return {std::move(name), value <= bound, value, bound, std::move(detail)};
}

/// Tolerances of the battery.
struct Tolerances {
  double feasibility = 1e-9;
  double kl_identity = 1e-10;
  double pinsker = 1e-12;
  double range = 1e-9;
  double rounding = 1e-9;
  double optimality = 1e-8;
};

/// Largest |(psi_k - psi_{k+1}) - KL_k| over k >= 1. At k = 0 the total mass
/// of B(0, 0) is not 1, so the identity carries an extra mass - 1 term there.
inline double kl_identity_residual(const SinkhornReport& rep) {
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < rep.psi_trace.size() && k < rep.kl_trace.size(); ++k)
    worst = std::max(worst, std::abs((rep.psi_trace[k] - rep.psi_trace[k + 1]) - rep.kl_trace[k]));
  return worst;
}

/// Largest violation of psi_k - psi_{k+1} >= gap_k^2 / 2 for k >= 1, where
/// gap_k is the marginal fixed by update k.
inline double pinsker_violation(const SinkhornReport& rep, bool symmetric = false) {
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < rep.psi_trace.size(); ++k) {
    const double gap = (symmetric || k % 2 == 0) ? rep.row_gap_trace[k] : rep.col_gap_trace[k];
    worst = std::max(worst, 0.5 * gap * gap - (rep.psi_trace[k] - rep.psi_trace[k + 1]));
  }
  return worst;
}

/// Largest max(range(u_k), range(v_k)) - R along the run.
inline double range_excess(const SinkhornReport& rep) {
  double worst = -rep.R;
  for (std::size_t k = 0; k < rep.u_range_trace.size(); ++k)
    worst = std::max({worst, rep.u_range_trace[k] - rep.R, rep.v_range_trace[k] - rep.R});
  return worst;
}

struct RoundingDistance {
  double distance = 0.0;  // ||G - B||_1
  double bound = 0.0;     // 2 (||B1 - r||_1 + ||B^T 1 - c||_1)
};

inline RoundingDistance rounding_distance(const ImplicitPlan& plan, std::span<const double> r,
                                          std::span<const double> c,
                                          std::size_t cap = kDenseCap) {
  const DenseMatrix b = scaling_to_dense(*plan.kernel, plan.u, plan.v, cap);
  const DenseMatrix g = plan_to_dense(plan, cap);
  RoundingDistance out;
  out.distance = l1_distance(g.data(), b.data());
  out.bound = 2.0 * (l1_distance(b.row_sums(), r) + l1_distance(b.col_sums(), c));
  return out;
}

struct VerifyOptions {
  bool symmetric = false;
  std::size_t dense_cap = kDenseCap;
  std::size_t exact_cap = kExactCap;
  Tolerances tol;
};

struct VerifyReport {
  OtSolution solution;
  std::optional<ExactOtResult> oracle;
  std::vector<Check> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

/// Solves the instance and evaluates every applicable check.
inline VerifyReport verify_instance(const SparseMatrix& cost, std::span<const double> r,
                                    std::span<const double> c, double epsilon,
                                    const VerifyOptions& opt = {}) {
  VerifyReport out;
  const std::size_t n = cost.n_rows();
  out.solution = opt.symmetric ? approx_ot_symmetric(cost, r, epsilon) : approx_ot(cost, r, c, epsilon);
  const OtSolution& sol = out.solution;
  const auto& rep = sol.sinkhorn_report;
  const auto& t = opt.tol;
  auto& checks = out.checks;

  const PlanMarginals pm = plan_marginals(sol.plan);
  checks.push_back(make_check("row_feasibility", l1_distance(pm.row, r), t.feasibility));
  checks.push_back(make_check("col_feasibility", l1_distance(pm.col, c), t.feasibility));

  if (sol.mode == DriverMode::sinkhorn) {
    checks.push_back(make_check("iteration_bound", static_cast<double>(rep.iterations),
                                rep.iteration_bound));
    if (!opt.symmetric) {
      checks.push_back(make_check("kl_identity", kl_identity_residual(rep), t.kl_identity));
      checks.push_back(make_check("pinsker_decrease", pinsker_violation(rep), t.pinsker));
    }
    checks.push_back(make_check("iterate_range", range_excess(rep), t.range));
  }
  if (n <= opt.dense_cap) {
    const DenseMatrix g = plan_to_dense(sol.plan, opt.dense_cap);
    const double lowest = *std::min_element(g.data().begin(), g.data().end());
    checks.push_back(make_check("nonnegativity", -lowest, 1e-15));
    if (sol.mode == DriverMode::sinkhorn) {
      const auto rd = rounding_distance(sol.plan, r, c, opt.dense_cap);
      checks.push_back(make_check("rounding_distance", rd.distance, rd.bound + t.rounding));
    }
  }
  if (n <= opt.exact_cap) {
    out.oracle = exact_ot(cost, r, c, opt.exact_cap);
    const bool cert = verify_dual_certificate(cost, r, c, out.oracle->cost, out.oracle->cert);
    checks.push_back({"dual_certificate", cert, cert ? 0.0 : 1.0, 0.0, {}});
    checks.push_back(make_check("epsilon_optimality", sol.cost - out.oracle->cost,
                                epsilon + t.optimality));
  }
  return out;
}

}  // namespace tws
