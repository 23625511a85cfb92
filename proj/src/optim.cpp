#include "dynmmsbm/optim.hpp"

#include <cmath>
#include <deque>

namespace dynmmsbm {

namespace {

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

// Two-loop recursion; works on the minimization problem h = -f.
Eigen::VectorXd search_direction(const std::deque<CurvaturePair>& mem, const Eigen::VectorXd& q_grad,
                                 const Eigen::VectorXd& scale) {
  Eigen::VectorXd q = q_grad;
  std::vector<double> a(mem.size());
  for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
    a[i] = mem[i].rho * mem[i].s.dot(q);
    q -= a[i] * mem[i].y;
  }
  if (scale.size() == q.size()) {
    q.array() *= scale.array();
  } else if (!mem.empty()) {
    const auto& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < mem.size(); ++i) {
    const double b = mem[i].rho * mem[i].y.dot(q);
    q += (a[i] - b) * mem[i].s;
  }
  return -q;
}

}  // namespace

LbfgsResult maximize_lbfgs(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opts) {
  LbfgsResult res;
  res.x = std::move(x0);
  const Eigen::Index n = res.x.size();
  if (n == 0) {
    Eigen::VectorXd g;
    res.value = f(res.x, g);
    res.converged = true;
    return res;
  }

  Eigen::VectorXd g(n);
  double h = -f(res.x, g);
  Eigen::VectorXd q = -g;
  res.value = -h;
  if (!std::isfinite(h)) {
    res.line_search_failed = true;
    return res;
  }

  std::deque<CurvaturePair> mem;
  Eigen::VectorXd x_new(n), g_new(n), q_new(n);
  for (int it = 0; it < opts.max_iter; ++it) {
    if (q.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    const bool scaled = opts.initial_scale.size() == n;
    auto steepest = [&] { return scaled ? Eigen::VectorXd(-(opts.initial_scale.array() * q.array()).matrix()) : Eigen::VectorXd(-q); };
    Eigen::VectorXd d = mem.empty() ? steepest() : search_direction(mem, q, opts.initial_scale);
    double slope = q.dot(d);
    if (!(slope < 0.0)) {
      mem.clear();
      d = steepest();
      slope = q.dot(d);
    }
    double step = mem.empty() && !scaled ? std::min(1.0, 1.0 / q.norm()) : 1.0;

    bool accepted = false;
    double h_new = h;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = res.x + step * d;
      h_new = -f(x_new, g_new);
      if (std::isfinite(h_new) && h_new <= h + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // A reset to steepest ascent gets one more chance before giving up.
      if (!mem.empty()) {
        mem.clear();
        --it;
        continue;
      }
      res.line_search_failed = true;
      break;
    }

    q_new = -g_new;
    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = q_new - q;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      mem.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
    } else {
      mem.clear();
    }

    const double change = std::abs(h_new - h);
    res.x = x_new;
    q = q_new;
    h = h_new;
    res.iterations = it + 1;
    if (change <= opts.rel_tol * std::max(1.0, std::abs(h))) {
      res.converged = true;
      break;
    }
  }
  res.value = -h;
  if (!res.converged && q.lpNorm<Eigen::Infinity>() < opts.grad_tol) res.converged = true;
  return res;
}

}  // namespace dynmmsbm
