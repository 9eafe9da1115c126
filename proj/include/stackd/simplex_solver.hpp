#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace stackd {

/// Objective on the simplex: returns f(w) and writes df/dw into grad.
/// May return -inf for infeasible points; the line search backs off.
using SimplexObjective = std::function<double(std::span<const double> w, std::span<double> grad)>;

struct SimplexSolve {
  std::vector<double> w;
  double objective = 0.0;
  std::size_t iterations = 0;
  double grad_norm = 0.0;  // gradient norm in the free softmax coordinates
  bool converged = false;
};

/// Maximizes a smooth function over the simplex through w = softmax(z) with
/// z[pinned] = 0, by BFGS ascent with Armijo backtracking. Converged when the
/// objective changes by less than reltol * (|f| + reltol) in one iteration.
/// Every accepted step increases the objective.
SimplexSolve maximize_on_simplex(const SimplexObjective& f, std::span<const double> start,
                                 std::size_t pinned, double reltol, std::size_t max_iter);

}  // namespace stackd
