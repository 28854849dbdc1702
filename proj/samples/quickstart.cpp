// Solve one tau-tree instance and compare against the exact LP.

#include <algorithm>
#include <cstdio>

#include "tws/tws.hpp"

int main() {
  tws::InstanceSpec spec;
  spec.family = tws::Family::tau_tree;
  spec.n = 32;
  spec.tau = 2;
  spec.seed = 7;
  const tws::ProblemInstance inst = tws::generate_instance(spec);

  const double c_inf = inst.cost.max_abs();
  const double eps = std::max(0.25 * c_inf, tws::min_feasible_epsilon(c_inf, inst.n()));
  const tws::OtSolution sol = tws::approx_ot(inst.cost, inst.r, inst.c, eps);
  const tws::ExactOtResult exact = tws::exact_ot(inst.cost, inst.r, inst.c);

  std::printf("n=%zu nnz(C)=%zu epsilon=%.4f gamma=%.4f\n", inst.n(), inst.cost.nnz(), eps, sol.gamma);
  std::printf("sinkhorn iterations=%zu (bound %.1f)\n", sol.sinkhorn_report.iterations,
              sol.sinkhorn_report.iteration_bound);
  std::printf("approx cost=%.6f exact cost=%.6f gap=%.2e\n", sol.cost, exact.cost, sol.cost - exact.cost);
  return 0;
}
