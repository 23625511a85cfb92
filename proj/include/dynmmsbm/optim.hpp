#pragma once

#include <functional>

#include <Eigen/Dense>

namespace dynmmsbm {

struct LbfgsOptions {
  int max_iter = 50;
  int memory = 10;
  double grad_tol = 1e-6;   // stop when max |gradient| falls below this
  double rel_tol = 1e-13;   // stop when the relative objective change falls below this
  int max_backtracks = 40;
  double armijo = 1e-4;
  /// Per-coordinate inverse curvature used while no curvature pairs are
  /// stored; empty falls back to a unit-length first step.
  Eigen::VectorXd initial_scale;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

/// Objective returning f(x) and writing its gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Limited-memory BFGS ascent with Armijo backtracking. The returned point is
/// never worse than `x0`.
LbfgsResult maximize_lbfgs(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opts = {});

}  // namespace dynmmsbm
