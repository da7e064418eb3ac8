#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <vector>

#include "moverstayer/data.hpp"
#include "moverstayer/model.hpp"
#include "moverstayer/numeric.hpp"

namespace moverstayer {

// Latent history of one subject: initial susceptibility b and the time r of
// the unobserved 1->2 transition (kNever when it does not occur).
inline constexpr int kNever = INT_MAX;

struct LatentPath {
  int b = 1;
  int r = kNever;
};

namespace detail {

// Per-subject evaluation of the observed-data log-likelihood together with
// the posterior over latent scenarios. The censored-subject mixture is
// accumulated in log space over its 2 + (y+1) scenarios:
//   (b=0), (b=1, never leaves state 1), (b=1, 1->2 at s) for s = 0..y.
// The posterior weights double as the E-step quantities and as the weights
// of the score (gradient = expected complete-data score).
class SubjectEvaluator {
 public:
  struct Posterior {
    double w = 1.0;      // P(B = 1 | data)
    double q_never = 0;  // P(B = 1, R > y | data), censored subjects only
    // q[r] = P(B = 1, R = r | data), r = 0..y, censored subjects only
    std::vector<double> q;
  };

  double evaluate(const ModelParams& p, const Subject& s,
                  Posterior* posterior = nullptr, Vector* grad = nullptr) {
    check_dims(p, s.x, s.z.cols());
    const int y = s.y;
    const auto n_times = static_cast<std::size_t>(y + 1);
    lp11_.resize(n_times);
    lp12_.resize(n_times);
    lp13_.resize(n_times);
    p12_.resize(n_times);
    p13_.resize(n_times);

    const double a = linear_predictor(p.alpha, s.x);
    const double log_pi = log_sigmoid(a);
    const double log_not_pi = log_sigmoid(-a);
    const double b12 = linear_predictor(p.beta12, s.x);
    const double b13 = linear_predictor(p.beta13, s.x);
    for (int t = 0; t <= y; ++t) {
      const auto zt = s.z.row(t);
      const Softmax3 sm(b12 + p.gamma12.dot(zt.transpose()),
                        b13 + p.gamma13.dot(zt.transpose()));
      lp11_[t] = sm.log_p1;
      lp12_[t] = sm.log_p2;
      lp13_[t] = sm.log_p3;
      p12_[t] = sm.p2;
      p13_[t] = sm.p3;
    }

    double loglik = 0.0;
    double w = 1.0;
    if (s.delta == 1) {
      loglik = log_pi;
      for (int t = 0; t < y; ++t) loglik += lp11_[t];
      loglik += lp13_[y];
    } else {
      terms_.resize(n_times + 2);
      terms_[0] = log_not_pi;
      double cum = 0.0;
      for (int r = 0; r <= y; ++r) {
        terms_[1 + r] = log_pi + cum + lp12_[r];
        cum += lp11_[r];
      }
      terms_[n_times + 1] = log_pi + cum;
      // The scenarios partition a probability space; rounding in the
      // log-sum-exp must not push the total above 1.
      loglik = std::min(logsumexp(terms_), 0.0);
      q_.resize(n_times);
      double w_sum = 0.0;
      for (int r = 0; r <= y; ++r) {
        q_[r] = std::exp(terms_[1 + r] - loglik);
        w_sum += q_[r];
      }
      q_never_ = std::exp(terms_[n_times + 1] - loglik);
      w = q_never_ + w_sum;
    }

    if (posterior != nullptr) {
      posterior->w = w;
      if (s.delta == 1) {
        posterior->q_never = 0.0;
        posterior->q.assign(n_times, 0.0);
      } else {
        posterior->q_never = q_never_;
        posterior->q.assign(q_.begin(), q_.end());
      }
    }

    if (grad != nullptr) accumulate_gradient(p, s, w, *grad);
    return loglik;
  }

 private:
  void accumulate_gradient(const ModelParams& p, const Subject& s, double w,
                           Vector& grad) const {
    const Eigen::Index d1 = p.alpha.size();
    const Eigen::Index q = p.gamma12.size();
    const double pi = sigmoid(linear_predictor(p.alpha, s.x));
    const double d_alpha = w - pi;
    grad[0] += d_alpha;
    grad.segment(1, d1 - 1) += d_alpha * s.x;

    double sum12 = 0.0;
    double sum13 = 0.0;
    auto g12 = grad.segment(3 * d1, q);
    auto g13 = grad.segment(3 * d1 + q, q);
    const int y = s.y;
    // Expected counts of each transition out of state 1 at time t.
    double c11_suffix = (s.delta == 1) ? 0.0 : q_never_;
    for (int t = y; t >= 0; --t) {
      double c11, c12, c13;
      if (s.delta == 1) {
        c11 = (t < y) ? 1.0 : 0.0;
        c12 = 0.0;
        c13 = (t == y) ? 1.0 : 0.0;
      } else {
        c11 = c11_suffix;  // q_never + sum_{r>t} q_r
        c12 = q_[t];
        c13 = 0.0;
        c11_suffix += q_[t];
      }
      const double total = c11 + c12 + c13;
      const double e12 = c12 - total * p12_[t];
      const double e13 = c13 - total * p13_[t];
      sum12 += e12;
      sum13 += e13;
      const auto zt = s.z.row(t).transpose();
      g12 += e12 * zt;
      g13 += e13 * zt;
    }
    grad[d1] += sum12;
    grad.segment(d1 + 1, d1 - 1) += sum12 * s.x;
    grad[2 * d1] += sum13;
    grad.segment(2 * d1 + 1, d1 - 1) += sum13 * s.x;
  }

  std::vector<double> lp11_, lp12_, lp13_, p12_, p13_, terms_, q_;
  double q_never_ = 0.0;
};

inline void check_dataset(const ModelParams& params,
                          const PanelDataset& data) {
  params.validate();
  if (data.empty())
    throw DataError(DataError::Code::empty_dataset, "empty dataset");
  if (data.fixed_dim() != params.fixed_dim() ||
      data.varying_dim() != params.varying_dim())
    throw DimensionError(
        "dataset has d=" + std::to_string(data.fixed_dim()) +
        ", q=" + std::to_string(data.varying_dim()) +
        " but parameters have d=" + std::to_string(params.fixed_dim()) +
        ", q=" + std::to_string(params.varying_dim()));
}

}  // namespace detail

// log L_i: observed-data likelihood contribution of one subject.
inline double subject_log_likelihood(const ModelParams& params,
                                     const Subject& subject) {
  detail::SubjectEvaluator ev;
  return ev.evaluate(params, subject);
}

// Sum over subjects in index order with compensated accumulation.
inline double total_log_likelihood(const ModelParams& params,
                                   const PanelDataset& data) {
  detail::check_dataset(params, data);
  detail::SubjectEvaluator ev;
  CompensatedSum sum;
  for (const auto& s : data.subjects()) sum.add(ev.evaluate(params, s));
  return sum.value();
}

// Log-likelihood and its gradient in flattened parameter order.
inline double log_likelihood_and_gradient(const ModelParams& params,
                                          const PanelDataset& data,
                                          Vector& grad) {
  detail::check_dataset(params, data);
  grad.setZero(params.size());
  detail::SubjectEvaluator ev;
  CompensatedSum sum;
  for (const auto& s : data.subjects())
    sum.add(ev.evaluate(params, s, nullptr, &grad));
  return sum.value();
}

inline Vector gradient(const ModelParams& params, const PanelDataset& data) {
  Vector g;
  log_likelihood_and_gradient(params, data, g);
  return g;
}

// Objective over the flattened parameter vector, for the optimizers.
class DynamicObjective {
 public:
  explicit DynamicObjective(const PanelDataset& data) : data_(&data) {}

  double operator()(const Vector& theta, Vector& grad) const {
    const auto p = ModelParams::unflatten(theta, data_->fixed_dim(),
                                          data_->varying_dim());
    return log_likelihood_and_gradient(p, *data_, grad);
  }

  double operator()(const Vector& theta) const {
    return total_log_likelihood(
        ModelParams::unflatten(theta, data_->fixed_dim(),
                               data_->varying_dim()),
        *data_);
  }

 private:
  const PanelDataset* data_;
};

// Complete-data likelihood of a subject along one latent path, evaluated in
// plain probability space (no log-domain tricks) so that it can serve as an
// independent check of subject_log_likelihood. Returns 0 for paths that are
// inconsistent with the observation.
inline double complete_data_likelihood(const ModelParams& params,
                                       const Subject& subject,
                                       const LatentPath& path) {
  check_dims(params, subject.x, subject.z.cols());
  const double a = linear_predictor(params.alpha, subject.x);
  const double pi = std::exp(a) / (1.0 + std::exp(a));
  auto probs = [&](int t) {
    const auto zt = subject.z.row(t).transpose();
    const double e12 =
        std::exp(linear_predictor(params.beta12, subject.x) +
                 params.gamma12.dot(zt));
    const double e13 =
        std::exp(linear_predictor(params.beta13, subject.x) +
                 params.gamma13.dot(zt));
    const double den = 1.0 + e12 + e13;
    return TransitionProbs{1.0 / den, e12 / den, e13 / den};
  };
  const int y = subject.y;
  if (path.b == 0) {
    if (subject.delta == 1 || path.r != kNever) return 0.0;
    return 1.0 - pi;
  }
  double value = pi;
  if (subject.delta == 1) {
    if (path.r != kNever) return 0.0;
    for (int t = 0; t < y; ++t) value *= probs(t).p11;
    return value * probs(y).p13;
  }
  if (path.r == kNever) {
    for (int t = 0; t <= y; ++t) value *= probs(t).p11;
    return value;
  }
  if (path.r < 0 || path.r > y) return 0.0;
  for (int t = 0; t < path.r; ++t) value *= probs(t).p11;
  return value * probs(path.r).p12;
}

inline constexpr int kEnumerationBound = 20;

// Every latent path consistent with the observation, with its
// complete-data likelihood.
inline std::vector<std::pair<LatentPath, double>> latent_path_weights(
    const ModelParams& params, const Subject& subject) {
  if (subject.y > kEnumerationBound)
    throw EnumerationBoundError("path enumeration supports y <= " +
                                std::to_string(kEnumerationBound) + ", got " +
                                std::to_string(subject.y));
  std::vector<LatentPath> paths;
  if (subject.delta == 1) {
    paths.push_back({1, kNever});
  } else {
    paths.push_back({0, kNever});
    paths.push_back({1, kNever});
    for (int r = 0; r <= subject.y; ++r) paths.push_back({1, r});
  }
  std::vector<std::pair<LatentPath, double>> out;
  for (const auto& path : paths)
    out.emplace_back(path, complete_data_likelihood(params, subject, path));
  return out;
}

// Marginal likelihood by brute-force summation over latent paths; equals
// exp(subject_log_likelihood).
inline double enumerate_latent_paths(const ModelParams& params,
                                     const Subject& subject) {
  double total = 0.0;
  for (const auto& [path, weight] : latent_path_weights(params, subject))
    total += weight;
  return total;
}

}  // namespace moverstayer
