#include "tmeig/optim.hpp"

#include <cmath>
#include <deque>

namespace tmeig {

namespace {

struct LinePoint {
  double a;
  double value;
  double slope;
};

// Minimizer of the cubic interpolant through two (a, value, slope) points,
// clipped to the interior of [lo.a, hi.a]; bisection when ill-conditioned.
double cubic_step(const LinePoint& p0, const LinePoint& p1) {
  const double d1 = p0.slope + p1.slope - 3.0 * (p0.value - p1.value) / (p0.a - p1.a);
  double disc = d1 * d1 - p0.slope * p1.slope;
  const double lo = std::min(p0.a, p1.a), hi = std::max(p0.a, p1.a);
  if (disc < 0.0) return 0.5 * (lo + hi);
  const double d2 = std::copysign(std::sqrt(disc), p1.a - p0.a);
  double step = p1.a - (p1.a - p0.a) * (p1.slope + d2 - d1) / (p1.slope - p0.slope + 2.0 * d2);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(step) || step < lo + margin || step > hi - margin)
    step = 0.5 * (lo + hi);
  return step;
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& objective, Vector x0, const LbfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  Vector x = std::move(x0);
  ObjectiveResult cur = objective(x);

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;

  LbfgsResult result;
  result.iterations = 0;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    result.iterations = iter;
    if (cur.gradient.norm() <= opts.grad_tol) {
      result.converged = true;
      break;
    }

    // Two-loop recursion.
    Vector d = -cur.gradient;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      d *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }

    double slope0 = cur.gradient.dot(d);
    if (!(slope0 < 0.0)) {  // not a descent direction; restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -cur.gradient;
      slope0 = cur.gradient.dot(d);
    }

    // Strong-Wolfe line search.
    const LinePoint start{0.0, cur.value, slope0};
    LinePoint prev = start;
    double a = 1.0;
    ObjectiveResult trial;
    Vector x_trial;
    bool accepted = false;

    auto eval_at = [&](double t) -> LinePoint {
      x_trial = x + t * d;
      trial = objective(x_trial);
      return {t, trial.value, trial.gradient.dot(d)};
    };

    LinePoint lo = start, hi = start;
    bool bracketed = false;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      const LinePoint p = eval_at(a);
      if (p.value > start.value + opts.wolfe_c1 * a * slope0 ||
          (ls > 0 && p.value >= prev.value)) {
        lo = prev;
        hi = p;
        bracketed = true;
        break;
      }
      if (std::abs(p.slope) <= -opts.wolfe_c2 * slope0) {
        accepted = true;
        break;
      }
      if (p.slope >= 0.0) {
        lo = p;
        hi = prev;
        bracketed = true;
        break;
      }
      prev = p;
      a *= 2.0;
    }

    if (bracketed) {
      for (int z = 0; z < opts.max_line_search; ++z) {
        const double t = cubic_step(lo, hi);
        const LinePoint p = eval_at(t);
        if (p.value > start.value + opts.wolfe_c1 * t * slope0 || p.value >= lo.value) {
          hi = p;
        } else {
          if (std::abs(p.slope) <= -opts.wolfe_c2 * slope0) {
            accepted = true;
            break;
          }
          if (p.slope * (hi.a - lo.a) >= 0.0) hi = lo;
          lo = p;
        }
        if (std::abs(hi.a - lo.a) < 1e-16 * std::max(1.0, std::abs(lo.a))) break;
      }
      if (!accepted && lo.a > 0.0) {
        // Sufficient decrease holds at lo even if curvature stalled; take it.
        eval_at(lo.a);
        accepted = trial.value < cur.value;
      }
    }

    if (!accepted) break;  // stalled; report the current point below

    Vector s = x_trial - x;
    Vector y = trial.gradient - cur.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(x_trial);
    cur = std::move(trial);
  }

  result.x = std::move(x);
  result.value = cur.value;
  result.grad_norm = cur.gradient.norm();
  if (result.grad_norm <= opts.grad_tol) result.converged = true;
  return result;
}

}  // namespace tmeig
