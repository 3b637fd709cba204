#pragma once

// Limited-memory BFGS with a backtracking/expanding line search that only
// accepts steps satisfying the Armijo condition, so the objective is
// non-increasing across accepted iterations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "stance/error.hpp"

namespace stance::optim {

// Returns f(x) and writes the gradient into `grad` (already sized like x).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
  std::size_t max_iter = 200;
  double grad_tol = 1e-6;        // stop when ||g||_inf < grad_tol
  double rel_f_tol = 0.0;        // optional: stop when relative decrease falls below this
  std::size_t memory = 10;
  std::size_t max_line_search = 40;
  double armijo = 1e-4;
  double wolfe = 0.9;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after every accepted iteration, starting with f(x0)
};

inline LbfgsResult minimize(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opt = {}) {
  const auto n = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);
  Eigen::VectorXd g(n);
  double fx = f(res.x, g);
  if (!std::isfinite(fx) || !g.allFinite())
    throw Error(ErrorCode::OptimizationDiverged, "objective is not finite at the starting point");
  res.trace.push_back(fx);

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x_new(n);
  Eigen::VectorXd g_new(n);

  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    res.grad_norm = n == 0 ? 0.0 : g.lpNorm<Eigen::Infinity>();
    if (res.grad_norm < opt.grad_tol) {
      res.converged = true;
      break;
    }

    // Two-loop recursion for d = -H g.
    Eigen::VectorXd d = -g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(d);
      d -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) {
      const auto& s = s_hist.back();
      const auto& y = y_hist.back();
      d *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(d);
      d += (alpha[k] - beta) * s_hist[k];
    }
    double dg = d.dot(g);
    if (!(dg < 0.0)) {
      // Lost descent; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      dg = d.dot(g);
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(d.norm(), 1e-300)) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    std::size_t ls = 0;
    for (; ls < opt.max_line_search; ++ls) {
      x_new = res.x + step * d;
      f_new = f(x_new, g_new);
      const bool finite = std::isfinite(f_new) && g_new.allFinite();
      if (finite && f_new <= fx + opt.armijo * step * dg) {
        accepted = true;
        break;
      }
      step *= finite ? 0.5 : 0.1;
    }
    if (!accepted) break;  // no further decrease along d

    // The full step was accepted but curvature is unmet: try longer steps while they keep improving.
    if (ls == 0) {
      Eigen::VectorXd x_try(n);
      Eigen::VectorXd g_try(n);
      for (int grow = 0; grow < 10 && g_new.dot(d) < opt.wolfe * dg; ++grow) {
        const double trial = step * 2.0;
        x_try = res.x + trial * d;
        const double f_try = f(x_try, g_try);
        if (!(std::isfinite(f_try) && g_try.allFinite() && f_try <= fx + opt.armijo * trial * dg && f_try < f_new))
          break;
        step = trial;
        x_new = x_try;
        g_new = g_try;
        f_new = f_try;
      }
    }

    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double f_old = fx;
    res.x = x_new;
    g = g_new;
    fx = f_new;
    res.trace.push_back(fx);
    res.iterations = iter + 1;
    if (opt.rel_f_tol > 0.0 && std::abs(f_old - fx) <= opt.rel_f_tol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
  }
  res.value = fx;
  res.grad_norm = n == 0 ? 0.0 : g.lpNorm<Eigen::Infinity>();
  if (res.grad_norm < opt.grad_tol) res.converged = true;
  return res;
}

}  // namespace stance::optim
