#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "moverstayer/data.hpp"
#include "moverstayer/likelihood.hpp"
#include "moverstayer/model.hpp"
#include "moverstayer/optimize.hpp"
#include "moverstayer/random.hpp"

namespace moverstayer {

struct FitConfig {
  // Random starts drawn uniformly from [-init_box, init_box]^p. They are
  // tried after a first start at `initial` (or at zero when unset); with an
  // explicit initial point that first start counts toward n_starts.
  int n_starts = 1;
  double init_box = 2.0;
  int max_iter = 1000;
  double tol = 1e-8;  // change in log-likelihood
  double separation_threshold = 15.0;
  std::uint64_t seed = 1;
  std::optional<Vector> initial;  // flattened parameter vector

  void validate() const {
    if (n_starts < 1) throw std::invalid_argument("n_starts must be >= 1");
    if (!(init_box > 0.0)) throw std::invalid_argument("init_box must be > 0");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");
    if (!(separation_threshold > 0.0))
      throw std::invalid_argument("separation_threshold must be > 0");
  }
};

template <class Params>
struct FitResult {
  Params theta_hat;
  double loglik = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int n_evaluations = 0;
  int iterations = 0;
  // |theta_j| above the separation threshold, flattened order
  std::vector<bool> separation_flags;
  int start_index = 0;
  std::vector<double> start_logliks;  // final value per start
  std::vector<double> trace;          // EM: log-likelihood per iteration
  int gem_violations = 0;             // EM only
  Eigen::Index n_parameters = 0;
  std::string status;

  double aic() const { return 2.0 * static_cast<double>(n_parameters) - 2.0 * loglik; }

  bool any_separation() const {
    for (bool f : separation_flags)
      if (f) return true;
    return false;
  }
};

inline std::vector<bool> separation_flags(const Vector& theta,
                                          double threshold) {
  std::vector<bool> flags(static_cast<std::size_t>(theta.size()));
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    flags[static_cast<std::size_t>(j)] = !(std::abs(theta[j]) <= threshold);
  return flags;
}

inline std::vector<Vector> start_points(Eigen::Index p,
                                        const FitConfig& config) {
  std::vector<Vector> starts;
  if (config.initial) {
    if (config.initial->size() != p)
      throw DimensionError("initial point has length " +
                           std::to_string(config.initial->size()) +
                           ", expected " + std::to_string(p));
    starts.push_back(*config.initial);
  } else {
    starts.push_back(Vector::Zero(p));
  }
  const int n_random = config.initial ? config.n_starts - 1 : config.n_starts;
  for (int k = 0; k < n_random; ++k) {
    RandomStream rng(config.seed, StreamPurpose::start,
                     static_cast<std::uint64_t>(k));
    Vector v(p);
    for (Eigen::Index j = 0; j < p; ++j)
      v[j] = rng.uniform(-config.init_box, config.init_box);
    starts.push_back(std::move(v));
  }
  return starts;
}

// Best-of multi-start BFGS maximization of `objective` (value + gradient
// over the flattened parameters). `to_params` maps the winning vector back.
template <class Params, class Objective, class ToParams>
FitResult<Params> fit_multistart(Objective&& objective, Eigen::Index p,
                                 const FitConfig& config,
                                 ToParams&& to_params) {
  config.validate();
  OptimizeOptions opt;
  opt.max_iter = config.max_iter;
  opt.f_tol = config.tol;

  FitResult<Params> best;
  best.n_parameters = p;
  std::optional<OptimizeResult> winner;
  int evaluations = 0;
  const auto starts = start_points(p, config);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (!starts[k].allFinite()) {
      best.start_logliks.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    auto res = maximize_bfgs(objective, starts[k], opt);
    evaluations += res.evaluations;
    best.start_logliks.push_back(res.value);
    if (std::isfinite(res.value) && (!winner || res.value > winner->value)) {
      winner = std::move(res);
      best.start_index = static_cast<int>(k);
    }
  }
  if (!winner)
    throw FitError("log-likelihood is not finite at any of the " +
                   std::to_string(starts.size()) + " starting points");
  best.theta_hat = to_params(winner->x);
  best.loglik = winner->value;
  best.converged = winner->converged;
  best.iterations = winner->iterations;
  best.n_evaluations = evaluations;
  best.status = winner->status;
  best.separation_flags =
      separation_flags(winner->x, config.separation_threshold);
  return best;
}

// Direct maximization of the observed-data log-likelihood over all
// coefficients.
inline FitResult<ModelParams> fit_direct(const PanelDataset& data,
                                         const FitConfig& config) {
  if (data.empty())
    throw DataError(DataError::Code::empty_dataset, "empty dataset");
  const auto d = data.fixed_dim();
  const auto q = data.varying_dim();
  DynamicObjective objective(data);
  return fit_multistart<ModelParams>(
      [&](const Vector& theta, Vector& grad) {
        return objective(theta, grad);
      },
      3 * (d + 1) + 2 * q, config,
      [&](const Vector& theta) { return ModelParams::unflatten(theta, d, q); });
}

// ---------------------------------------------------------------------------
// EM algorithm

// Posterior of the latent variables of one subject.
//   w    = E[B | data]
//   q[r] = P(B = 1, R = r | data) for r = 0..y, q[y+1] = P(B = 1, R > y | data)
// For observed movers w = 1 and q = 0.
struct EStep {
  double w = 1.0;
  Vector q;
};

inline EStep e_step(const ModelParams& params, const Subject& subject) {
  detail::SubjectEvaluator ev;
  detail::SubjectEvaluator::Posterior post;
  ev.evaluate(params, subject, &post);
  EStep out;
  out.w = post.w;
  out.q.resize(subject.y + 2);
  for (int r = 0; r <= subject.y; ++r) out.q[r] = post.q[static_cast<std::size_t>(r)];
  out.q[subject.y + 1] = post.q_never;
  return out;
}

// E-step over the whole dataset; returns the observed log-likelihood at
// `params` as a by-product.
inline double e_step_all(const ModelParams& params, const PanelDataset& data,
                         std::vector<EStep>& out) {
  detail::check_dataset(params, data);
  detail::SubjectEvaluator ev;
  detail::SubjectEvaluator::Posterior post;
  CompensatedSum ll;
  out.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    ll.add(ev.evaluate(params, s, &post));
    auto& e = out[i];
    e.w = post.w;
    e.q.resize(s.y + 2);
    for (int r = 0; r <= s.y; ++r) e.q[r] = post.q[static_cast<std::size_t>(r)];
    e.q[s.y + 1] = post.q_never;
  }
  return ll.value();
}

// One row of the weighted multinomial-logit data used by the M-step.
// category: 1 = stays at risk, 2 = becomes stayer, 3 = moves.
struct ExtendedRecord {
  std::size_t subject = 0;
  int t = 0;
  int category = 1;
  double weight = 0.0;
};

// Observed mover: one 1->3 row at y and 1->1 rows for t < y, weight 1.
// Censored subject: for each t <= y a 1->1 row with weight
// q_never + sum_{r>t} q_r and a 1->2 row with weight q_t.
inline std::vector<ExtendedRecord> build_extended_data(
    const PanelDataset& data, std::span<const EStep> esteps) {
  if (esteps.size() != data.size())
    throw DimensionError("E-step weights do not match the dataset");
  std::vector<ExtendedRecord> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    if (s.delta == 1) {
      for (int t = 0; t < s.y; ++t) rows.push_back({i, t, 1, 1.0});
      rows.push_back({i, s.y, 3, 1.0});
      continue;
    }
    const auto& q = esteps[i].q;
    if (q.size() != s.y + 2)
      throw DimensionError("E-step vector has wrong length for subject " + s.id);
    std::vector<double> stay(static_cast<std::size_t>(s.y) + 1);
    double suffix = q[s.y + 1];
    for (int t = s.y; t >= 0; --t) {
      stay[static_cast<std::size_t>(t)] = suffix;
      suffix += q[t];
    }
    for (int t = 0; t <= s.y; ++t) {
      rows.push_back({i, t, 1, stay[static_cast<std::size_t>(t)]});
      rows.push_back({i, t, 2, q[t]});
    }
  }
  return rows;
}

struct MStepOptions {
  double gradient_tol = 1e-8;  // inner Newton, gradient max-norm
  int max_iter = 200;
  double separation_threshold = 15.0;
};

struct MStepResult {
  ModelParams params;
  std::vector<bool> separation_flags;  // flattened order
  int alpha_iterations = 0;
  int multinomial_iterations = 0;
  double alpha_gradient = 0.0;        // final max-norm
  double multinomial_gradient = 0.0;  // final max-norm

  bool separated() const {
    for (bool f : separation_flags)
      if (f) return true;
    return false;
  }
};

namespace detail {

struct NewtonOutcome {
  Vector coef;
  int iterations = 0;
  double gradient = 0.0;
  std::vector<bool> diverged;
};

// Damped Newton ascent on a concave objective. `eval(coef, grad, hess)`
// returns the value and fills gradient and Hessian. Stops at the gradient
// tolerance, or as soon as a coefficient leaves the separation box.
template <class Eval>
NewtonOutcome newton_ascent(Eval&& eval, Vector coef, const MStepOptions& opt,
                            const std::string& block) {
  const Eigen::Index p = coef.size();
  Vector grad(p), trial_grad(p);
  Matrix hess(p, p), trial_hess(p, p);
  NewtonOutcome out;
  out.diverged.assign(static_cast<std::size_t>(p), false);
  double value = eval(coef, grad, hess);
  if (!std::isfinite(value)) throw MStepError(block, 0, std::nan(""));
  for (int it = 0;; ++it) {
    out.iterations = it;
    out.gradient = grad.cwiseAbs().maxCoeff();
    if (out.gradient <= opt.gradient_tol) break;
    if (it >= opt.max_iter) throw MStepError(block, it, out.gradient);
    Eigen::LDLT<Matrix> ldlt(-hess);
    Vector step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive())
      step = ldlt.solve(grad);
    if (step.size() != p || !step.allFinite() || step.dot(grad) <= 0.0)
      step = grad / std::max(1.0, -hess.diagonal().minCoeff());
    double scale = 1.0;
    bool improved = false;
    // Near the optimum the predicted gain drops below the rounding level of
    // the objective, which can then no longer rank the trial point; take the
    // full Newton step.
    if (grad.dot(step) < 1e-12 * std::max(1.0, std::abs(value))) {
      coef += step;
      value = eval(coef, grad, hess);
      if (!std::isfinite(value)) throw MStepError(block, it, out.gradient);
      improved = true;
    }
    for (int h = 0; h < 60 && !improved; ++h, scale *= 0.5) {
      const Vector trial = coef + scale * step;
      const double v = eval(trial, trial_grad, trial_hess);
      if (std::isfinite(v) && v >= value) {
        coef = trial;
        value = v;
        grad.swap(trial_grad);
        hess.swap(trial_hess);
        improved = true;
        break;
      }
    }
    if (!improved) {
      // No representable ascent left: accept if the gradient is at rounding
      // level relative to the objective.
      if (out.gradient <= 1e-9 * std::max(1.0, std::abs(value))) break;
      throw MStepError(block, it, out.gradient);
    }
    bool escaped = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!(std::abs(coef[j]) <= opt.separation_threshold)) {
        out.diverged[static_cast<std::size_t>(j)] = true;
        escaped = true;
      }
    }
    if (escaped) {
      out.iterations = it + 1;
      out.gradient = grad.cwiseAbs().maxCoeff();
      break;
    }
  }
  out.coef = std::move(coef);
  return out;
}

// sum_i w_i log pi_i + (1 - w_i) log(1 - pi_i)
inline double weighted_logistic(const PanelDataset& data,
                                std::span<const double> weights,
                                const Vector& alpha, Vector& grad,
                                Matrix& hess) {
  const Eigen::Index m = alpha.size();
  grad.setZero(m);
  hess.setZero(m, m);
  Vector u(m);
  CompensatedSum value;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    u[0] = 1.0;
    u.tail(m - 1) = s.x;
    const double a = alpha.dot(u);
    const double w = weights[i];
    value.add(w * log_sigmoid(a) + (1.0 - w) * log_sigmoid(-a));
    const double pi = sigmoid(a);
    grad += (w - pi) * u;
    hess.noalias() -= pi * (1.0 - pi) * (u * u.transpose());
  }
  return value.value();
}

// Weighted multinomial logit on the extended data. Coefficients are
// [c2; c3] with c_j = (beta1j, gamma1j) acting on u = (1, x, z_t).
inline double weighted_multinomial(const PanelDataset& data,
                                   std::span<const ExtendedRecord> rows,
                                   const Vector& coef, Vector* grad,
                                   Matrix* hess) {
  const Eigen::Index d = data.fixed_dim();
  const Eigen::Index q = data.varying_dim();
  const Eigen::Index m = d + 1 + q;
  if (grad) grad->setZero(2 * m);
  if (hess) hess->setZero(2 * m, 2 * m);
  const auto c2 = coef.head(m);
  const auto c3 = coef.tail(m);
  Vector u(m);
  Matrix uu(m, m);
  CompensatedSum value;
  std::size_t k = 0;
  while (k < rows.size()) {
    // Rows sharing (subject, t) share covariates and probabilities.
    const auto& head = rows[k];
    double wc[3] = {0.0, 0.0, 0.0};
    std::size_t end = k;
    while (end < rows.size() && rows[end].subject == head.subject &&
           rows[end].t == head.t) {
      const int c = rows[end].category;
      if (c < 1 || c > 3) throw std::invalid_argument("bad category");
      wc[c - 1] += rows[end].weight;
      ++end;
    }
    k = end;
    const double total = wc[0] + wc[1] + wc[2];
    if (total == 0.0) continue;
    const auto& s = data[head.subject];
    u[0] = 1.0;
    u.segment(1, d) = s.x;
    u.tail(q) = s.z.row(head.t).transpose();
    const Softmax3 sm(c2.dot(u), c3.dot(u));
    double v = 0.0;
    if (wc[0] != 0.0) v += wc[0] * sm.log_p1;
    if (wc[1] != 0.0) v += wc[1] * sm.log_p2;
    if (wc[2] != 0.0) v += wc[2] * sm.log_p3;
    value.add(v);
    if (grad) {
      grad->head(m) += (wc[1] - total * sm.p2) * u;
      grad->tail(m) += (wc[2] - total * sm.p3) * u;
    }
    if (hess) {
      uu.noalias() = u * u.transpose();
      hess->topLeftCorner(m, m) -= total * sm.p2 * (1.0 - sm.p2) * uu;
      hess->bottomRightCorner(m, m) -= total * sm.p3 * (1.0 - sm.p3) * uu;
      hess->topRightCorner(m, m) += total * sm.p2 * sm.p3 * uu;
    }
  }
  if (hess)
    hess->bottomLeftCorner(m, m) = hess->topRightCorner(m, m).transpose();
  return value.value();
}

inline Vector pack_multinomial(const ModelParams& p) {
  const Eigen::Index m = p.beta12.size() + p.gamma12.size();
  Vector c(2 * m);
  c << p.beta12, p.gamma12, p.beta13, p.gamma13;
  return c;
}

inline void unpack_multinomial(const Vector& c, ModelParams& p) {
  const Eigen::Index d1 = p.beta12.size();
  const Eigen::Index q = p.gamma12.size();
  const Eigen::Index m = d1 + q;
  p.beta12 = c.segment(0, d1);
  p.gamma12 = c.segment(d1, q);
  p.beta13 = c.segment(m, d1);
  p.gamma13 = c.segment(m + d1, q);
}

}  // namespace detail

// Expected complete-data log-likelihood Q(params | E-step weights).
inline double q_function(const ModelParams& params, const PanelDataset& data,
                         std::span<const EStep> esteps,
                         std::span<const ExtendedRecord> rows) {
  std::vector<double> w(esteps.size());
  for (std::size_t i = 0; i < esteps.size(); ++i) w[i] = esteps[i].w;
  Vector g;
  Matrix h;
  const double alpha_part =
      detail::weighted_logistic(data, w, params.alpha, g, h);
  return alpha_part + detail::weighted_multinomial(
                          data, rows, detail::pack_multinomial(params),
                          nullptr, nullptr);
}

inline double q_function(const ModelParams& params, const PanelDataset& data,
                         std::span<const EStep> esteps) {
  const auto rows = build_extended_data(data, esteps);
  return q_function(params, data, esteps, rows);
}

// M-step: alpha by weighted logistic regression on the W_i, the transition
// coefficients by weighted multinomial logit on the extended data, each
// solved by Newton from `start` to the inner gradient tolerance.
inline MStepResult m_step(const PanelDataset& data,
                          std::span<const EStep> esteps,
                          std::span<const ExtendedRecord> rows,
                          const ModelParams& start,
                          const MStepOptions& opt = {}) {
  detail::check_dataset(start, data);
  if (esteps.size() != data.size())
    throw DimensionError("E-step weights do not match the dataset");
  std::vector<double> w(esteps.size());
  for (std::size_t i = 0; i < esteps.size(); ++i) w[i] = esteps[i].w;

  MStepResult out;
  out.params = start;
  auto alpha_fit = detail::newton_ascent(
      [&](const Vector& a, Vector& g, Matrix& h) {
        return detail::weighted_logistic(data, w, a, g, h);
      },
      start.alpha, opt, "alpha");
  out.params.alpha = alpha_fit.coef;
  out.alpha_iterations = alpha_fit.iterations;
  out.alpha_gradient = alpha_fit.gradient;

  auto multi_fit = detail::newton_ascent(
      [&](const Vector& c, Vector& g, Matrix& h) {
        return detail::weighted_multinomial(data, rows, c, &g, &h);
      },
      detail::pack_multinomial(start), opt, "transitions");
  detail::unpack_multinomial(multi_fit.coef, out.params);
  out.multinomial_iterations = multi_fit.iterations;
  out.multinomial_gradient = multi_fit.gradient;

  out.separation_flags =
      separation_flags(out.params.flatten(), opt.separation_threshold);
  return out;
}

inline MStepResult m_step(const PanelDataset& data,
                          std::span<const EStep> esteps,
                          const ModelParams& start,
                          const MStepOptions& opt = {}) {
  const auto rows = build_extended_data(data, esteps);
  return m_step(data, esteps, rows, start, opt);
}

// EM iterations from config.initial (zero when unset) until the observed
// log-likelihood changes by less than config.tol. trace[k] is the
// log-likelihood after k iterations. An iteration whose M-step raised Q but
// lowered the observed log-likelihood by more than 1e-8 counts as a GEM
// violation.
inline FitResult<ModelParams> fit_em(const PanelDataset& data,
                                     const FitConfig& config) {
  config.validate();
  if (data.empty())
    throw DataError(DataError::Code::empty_dataset, "empty dataset");
  const auto d = data.fixed_dim();
  const auto q = data.varying_dim();
  ModelParams theta = config.initial
                          ? ModelParams::unflatten(*config.initial, d, q)
                          : ModelParams::zeros(d, q);
  MStepOptions mopt;
  mopt.separation_threshold = config.separation_threshold;

  FitResult<ModelParams> res;
  res.n_parameters = theta.size();
  std::vector<EStep> esteps;
  double ll = e_step_all(theta, data, esteps);
  if (!std::isfinite(ll))
    throw FitError("log-likelihood is not finite at the EM starting point");
  res.trace.push_back(ll);
  res.n_evaluations = 1;
  res.status = "iteration limit reached";
  for (int it = 0; it < config.max_iter; ++it) {
    const auto rows = build_extended_data(data, esteps);
    const double q_old = q_function(theta, data, esteps, rows);
    auto ms = m_step(data, esteps, rows, theta, mopt);
    const double q_new = q_function(ms.params, data, esteps, rows);
    theta = std::move(ms.params);
    const double ll_new = e_step_all(theta, data, esteps);
    ++res.n_evaluations;
    res.trace.push_back(ll_new);
    res.iterations = it + 1;
    if (q_new >= q_old && ll_new < ll - 1e-8) ++res.gem_violations;
    const double change = ll_new - ll;
    ll = ll_new;
    if (ms.separated()) {
      res.status = "separation: coefficient left the separation box";
      break;
    }
    if (std::abs(change) < config.tol) {
      res.converged = true;
      res.status = "log-likelihood change below tolerance";
      break;
    }
  }
  res.theta_hat = theta;
  res.loglik = ll;
  res.separation_flags =
      separation_flags(theta.flatten(), config.separation_threshold);
  return res;
}

}  // namespace moverstayer
