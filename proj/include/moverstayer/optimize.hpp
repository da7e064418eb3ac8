#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "moverstayer/data.hpp"

namespace moverstayer {

struct OptimizeOptions {
  int max_iter = 1000;
  // Stop when one iteration changes the objective by less than this.
  double f_tol = 1e-8;
  // Stop when the gradient max-norm falls below this.
  double g_tol = 0.0;
};

struct OptimizeResult {
  Vector x;
  double value = -std::numeric_limits<double>::infinity();
  Vector gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
};

namespace detail {

// Strong-Wolfe line search for maximizing f along direction d
// (Nocedal & Wright, algorithms 3.5 and 3.6). Works on phi(a) = -f(x + a d).
template <class Objective>
class WolfeSearch {
 public:
  struct Point {
    double step = 0.0;
    double phi = 0.0;
    double dphi = 0.0;
    Vector x;
    Vector grad;  // gradient of f (not phi)
    bool finite = false;
  };

  WolfeSearch(Objective& f, const Vector& x0, double f0, const Vector& g0,
              const Vector& dir, int& evaluations)
      : f_(f), x0_(x0), dir_(dir), evals_(evaluations) {
    origin_.step = 0.0;
    origin_.phi = -f0;
    origin_.dphi = -g0.dot(dir);
    origin_.x = x0;
    origin_.grad = g0;
    origin_.finite = true;
  }

  // Returns a point satisfying at least sufficient decrease, or the origin
  // when none was found.
  Point search(double initial_step) {
    Point prev = origin_;
    double step = initial_step;
    for (int i = 0; i < kMaxIter; ++i) {
      Point cur = eval(step);
      if (!cur.finite || cur.phi > origin_.phi + kC1 * step * origin_.dphi ||
          (i > 0 && cur.phi >= prev.phi))
        return zoom(prev, cur);
      if (std::abs(cur.dphi) <= -kC2 * origin_.dphi) return cur;
      if (cur.dphi >= 0.0) return zoom(cur, prev);
      prev = std::move(cur);
      step *= 2.0;
    }
    return prev;
  }

 private:
  static constexpr double kC1 = 1e-4;
  static constexpr double kC2 = 0.9;
  static constexpr int kMaxIter = 40;

  Point eval(double step) {
    Point p;
    p.step = step;
    p.x = x0_ + step * dir_;
    p.grad.resize(x0_.size());
    const double fx = f_(p.x, p.grad);
    ++evals_;
    p.finite = std::isfinite(fx) && p.grad.allFinite();
    p.phi = p.finite ? -fx : std::numeric_limits<double>::infinity();
    p.dphi = p.finite ? -p.grad.dot(dir_) : 0.0;
    return p;
  }

  // lo satisfies sufficient decrease and has the lower phi of the bracket.
  Point zoom(Point lo, Point hi) {
    for (int i = 0; i < kMaxIter; ++i) {
      const double a = lo.step;
      const double b = hi.step;
      double step = 0.5 * (a + b);
      if (hi.finite) {
        // minimizer of the quadratic through phi(lo), phi'(lo), phi(hi)
        const double h = b - a;
        const double denom = 2.0 * (hi.phi - lo.phi - lo.dphi * h);
        if (denom > 0.0) {
          const double cand = a - lo.dphi * h * h / denom;
          const double lo_b = std::min(a, b) + 0.1 * std::abs(h);
          const double hi_b = std::max(a, b) - 0.1 * std::abs(h);
          if (std::isfinite(cand)) step = std::clamp(cand, lo_b, hi_b);
        }
      }
      if (std::abs(b - a) < 1e-16 * std::max(1.0, std::abs(a))) break;
      Point cur = eval(step);
      if (!cur.finite ||
          cur.phi > origin_.phi + kC1 * step * origin_.dphi ||
          cur.phi >= lo.phi) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.dphi) <= -kC2 * origin_.dphi) return cur;
        if (cur.dphi * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    return lo;
  }

  Objective& f_;
  const Vector& x0_;
  const Vector& dir_;
  int& evals_;
  Point origin_;
};

}  // namespace detail

// Quasi-Newton (BFGS) maximizer. `f(x, grad)` returns the objective and
// writes its gradient; non-finite values are treated as infeasible and the
// line search backs off. The best value seen never decreases.
template <class Objective>
OptimizeResult maximize_bfgs(Objective&& f, Vector x0,
                             const OptimizeOptions& opt = {}) {
  OptimizeResult res;
  const Eigen::Index p = x0.size();
  res.x = std::move(x0);
  res.gradient.resize(p);
  res.value = f(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
    res.status = "non-finite objective at the starting point";
    res.value = -std::numeric_limits<double>::infinity();
    return res;
  }

  Matrix inv_hess = Matrix::Identity(p, p);  // of -f
  bool identity = true;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    if (res.gradient.cwiseAbs().maxCoeff() <= opt.g_tol) {
      res.converged = true;
      res.status = "gradient tolerance reached";
      return res;
    }
    Vector dir = inv_hess * res.gradient;
    if (res.gradient.dot(dir) <= 0.0) {
      inv_hess.setIdentity();
      identity = true;
      dir = res.gradient;
    }
    const double init_step =
        identity ? std::min(1.0, 1.0 / std::max(1e-300, dir.cwiseAbs().maxCoeff()))
                 : 1.0;
    detail::WolfeSearch<std::remove_reference_t<Objective>> ls(
        f, res.x, res.value, res.gradient, dir, res.evaluations);
    auto pt = ls.search(init_step);
    if (pt.step == 0.0) {
      if (!identity) {
        inv_hess.setIdentity();
        identity = true;
        continue;
      }
      res.status = "line search failed";
      res.iterations = iter;
      // No ascent direction left at machine precision: stationary in practice.
      res.converged = res.gradient.cwiseAbs().maxCoeff() <=
                      1e-6 * std::max(1.0, std::abs(res.value));
      return res;
    }
    const Vector s = pt.x - res.x;
    const Vector yv = res.gradient - pt.grad;  // gradient change of -f
    const double change = -pt.phi - res.value;
    res.x = std::move(pt.x);
    res.gradient = std::move(pt.grad);
    res.value = -pt.phi;
    res.iterations = iter + 1;

    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (identity) {
        inv_hess *= sy / yv.squaredNorm();
        identity = false;
      }
      const Vector hy = inv_hess * yv;
      const double rho = 1.0 / sy;
      inv_hess += (rho * rho * yv.dot(hy) + rho) * (s * s.transpose()) -
                  rho * (hy * s.transpose() + s * hy.transpose());
    }
    if (std::abs(change) < opt.f_tol) {
      res.converged = true;
      res.status = "function tolerance reached";
      return res;
    }
  }
  res.status = "iteration limit reached";
  return res;
}

// Central differences with step rel_step * max(1, |x_j|).
template <class Function>
Vector central_difference_gradient(Function&& f, const Vector& x,
                                   double rel_step = 1e-6) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const double fp = f(xp);
    xp[j] = x[j] - h;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central-difference Hessian from function values only, step
// rel_step * max(1, |x_j|) per coordinate.
template <class Function>
Matrix numerical_hessian(Function&& f, const Vector& x,
                         double rel_step = 1e-4) {
  const Eigen::Index p = x.size();
  Vector h(p);
  for (Eigen::Index j = 0; j < p; ++j)
    h[j] = rel_step * std::max(1.0, std::abs(x[j]));
  Matrix hess(p, p);
  const double f0 = f(x);
  Vector xp = x;
  for (Eigen::Index j = 0; j < p; ++j) {
    xp[j] = x[j] + h[j];
    const double fp = f(xp);
    xp[j] = x[j] - h[j];
    const double fm = f(xp);
    xp[j] = x[j];
    hess(j, j) = (fp - 2.0 * f0 + fm) / (h[j] * h[j]);
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = j + 1; k < p; ++k) {
      auto at = [&](double sj, double sk) {
        xp[j] = x[j] + sj * h[j];
        xp[k] = x[k] + sk * h[k];
        const double v = f(xp);
        xp[j] = x[j];
        xp[k] = x[k];
        return v;
      };
      const double v =
          (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[j] * h[k]);
      hess(j, k) = v;
      hess(k, j) = v;
    }
  }
  return hess;
}

}  // namespace moverstayer
