#pragma once

#include <functional>

#include "tmeig/numerics.hpp"

namespace tmeig {

struct ObjectiveResult {
  double value;
  Vector gradient;
};

using Objective = std::function<ObjectiveResult(const Vector&)>;

struct LbfgsOptions {
  int memory = 10;
  double grad_tol = 1e-8;  // Euclidean norm of the gradient at exit
  int max_iterations = 500;
  int max_line_search = 60;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;  // false when the iteration cap or a stalled line search ended the run
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracket + zoom,
/// cubic interpolation). Intended for smooth unconstrained objectives.
LbfgsResult minimize_lbfgs(const Objective& objective, Vector x0, const LbfgsOptions& opts = {});

}  // namespace tmeig
