#pragma once

#include "feinn/types.hpp"

#include <functional>
#include <vector>

namespace feinn {

struct BfgsOptions {
  int max_iters = 1000;
  double grad_tol = 1e-12;
  double c1 = 1e-4; // Armijo
  double c2 = 0.9;  // Wolfe curvature
  double curvature_skip = 1e-10;
  int lbfgs_memory = 0; // 0 = dense inverse Hessian; > 0 = limited memory
  int max_line_search = 30;
  // H <- (s.y / y.y) I before the first update. Off by default: the scale
  // estimate is poisoned when the first step crosses l1 kinks, and the plain
  // identity start matches reference BFGS implementations.
  bool scale_first_update = false;
};

enum class BfgsStatus { Converged, IterationLimit, LineSearchFailed };

struct BfgsResult {
  Vec x;
  double f = 0.0;
  Vec grad;
  int iterations = 0;
  BfgsStatus status = BfgsStatus::IterationLimit;
  std::vector<double> history; // loss per iteration, history[0] = initial
};

/// Objective returning f(x) and writing grad(x) into the second argument.
using ValueGrad = std::function<double(const Vec&, Vec&)>;
using IterCallback = std::function<void(int iter, const Vec& x, double f)>;

/// Quasi-Newton minimization with a strong-Wolfe cubic-interpolation line
/// search. Inverse-Hessian updates are skipped on non-positive curvature;
/// a failed line search returns the best point seen with a flagged status.
BfgsResult bfgs_minimize(const ValueGrad& fg, const Vec& x0, const BfgsOptions& opts = {},
                         const IterCallback& callback = nullptr);

BfgsResult bfgs_minimize(const std::function<double(const Vec&)>& f, const std::function<Vec(const Vec&)>& grad,
                         const Vec& x0, const BfgsOptions& opts = {});

} // namespace feinn
