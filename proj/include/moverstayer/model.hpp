#pragma once

#include <string>
#include <vector>

#include "moverstayer/data.hpp"
#include "moverstayer/error.hpp"
#include "moverstayer/numeric.hpp"

namespace moverstayer {

// Coefficients of the dynamic mover-stayer model. Intercepts are element 0
// of alpha, beta12 and beta13; gamma vectors carry no intercept.
//
// Flattened order, used by every optimizer, Hessian and file format:
//   alpha (d+1), beta12 (d+1), beta13 (d+1), gamma12 (q), gamma13 (q)
struct ModelParams {
  Vector alpha;
  Vector beta12;
  Vector beta13;
  Vector gamma12;
  Vector gamma13;

  static ModelParams zeros(Eigen::Index d, Eigen::Index q) {
    return {Vector::Zero(d + 1), Vector::Zero(d + 1), Vector::Zero(d + 1),
            Vector::Zero(q), Vector::Zero(q)};
  }

  Eigen::Index fixed_dim() const { return alpha.size() - 1; }
  Eigen::Index varying_dim() const { return gamma12.size(); }
  Eigen::Index size() const { return 3 * alpha.size() + 2 * gamma12.size(); }

  void validate() const {
    if (alpha.size() < 1)
      throw DimensionError("alpha must contain at least the intercept");
    if (beta12.size() != alpha.size() || beta13.size() != alpha.size())
      throw DimensionError("alpha, beta12 and beta13 must share length d+1");
    if (gamma13.size() != gamma12.size())
      throw DimensionError("gamma12 and gamma13 must share length q");
    if (!alpha.allFinite() || !beta12.allFinite() || !beta13.allFinite() ||
        !gamma12.allFinite() || !gamma13.allFinite())
      throw DimensionError("non-finite model parameter");
  }

  Vector flatten() const {
    Vector out(size());
    out << alpha, beta12, beta13, gamma12, gamma13;
    return out;
  }

  static ModelParams unflatten(const Vector& theta, Eigen::Index d,
                               Eigen::Index q) {
    if (theta.size() != 3 * (d + 1) + 2 * q)
      throw DimensionError("flattened parameter vector has length " +
                           std::to_string(theta.size()) + ", expected " +
                           std::to_string(3 * (d + 1) + 2 * q));
    ModelParams p;
    Eigen::Index k = 0;
    auto take = [&](Eigen::Index len) {
      Vector v = theta.segment(k, len);
      k += len;
      return v;
    };
    p.alpha = take(d + 1);
    p.beta12 = take(d + 1);
    p.beta13 = take(d + 1);
    p.gamma12 = take(q);
    p.gamma13 = take(q);
    return p;
  }
};

// Labels in flattened order, 1-based with the intercept first
// (alpha[1] is the intercept, gamma12[2] the second time-varying effect).
inline std::vector<std::string> parameter_names(Eigen::Index d,
                                                Eigen::Index q) {
  std::vector<std::string> names;
  for (const char* block : {"alpha", "beta12", "beta13"})
    for (Eigen::Index j = 0; j <= d; ++j)
      names.push_back(std::string(block) + "[" + std::to_string(j + 1) + "]");
  for (const char* block : {"gamma12", "gamma13"})
    for (Eigen::Index j = 0; j < q; ++j)
      names.push_back(std::string(block) + "[" + std::to_string(j + 1) + "]");
  return names;
}

struct TransitionProbs {
  double p11;
  double p12;
  double p13;
};

struct CumulativeProbs {
  double stayer;   // P(S_t = 2)
  double mover;    // P(S_t = 3)
  double at_risk;  // P(S_t = 1)
};

// coef[0] + coef[1:]' x
inline double linear_predictor(const Vector& coef,
                               const Eigen::Ref<const Vector>& x) {
  if (coef.size() != x.size() + 1)
    throw DimensionError("coefficient vector has length " +
                         std::to_string(coef.size()) + " but covariates " +
                         std::to_string(x.size()) + " (+1 intercept)");
  return coef[0] + coef.tail(x.size()).dot(x);
}

// Probability of starting in the at-risk state 1.
inline double initial_risk_prob(const Vector& alpha,
                                const Eigen::Ref<const Vector>& x) {
  return sigmoid(linear_predictor(alpha, x));
}

inline void check_dims(const ModelParams& params,
                       const Eigen::Ref<const Vector>& x, Eigen::Index q) {
  if (x.size() != params.fixed_dim())
    throw DimensionError("expected " + std::to_string(params.fixed_dim()) +
                         " fixed covariates, got " + std::to_string(x.size()));
  if (q != params.varying_dim())
    throw DimensionError("expected " + std::to_string(params.varying_dim()) +
                         " time-varying covariates, got " + std::to_string(q));
}

// Multinomial-logit transitions out of state 1 during (t, t+1], with 1->1 as
// the baseline category. Time enters only through z_t.
inline TransitionProbs transition_probs(const ModelParams& params,
                                        const Eigen::Ref<const Vector>& x,
                                        const Eigen::Ref<const Vector>& z_t) {
  check_dims(params, x, z_t.size());
  const double eta12 = linear_predictor(params.beta12, x) +
                       params.gamma12.dot(z_t);
  const double eta13 = linear_predictor(params.beta13, x) +
                       params.gamma13.dot(z_t);
  const Softmax3 sm(eta12, eta13);
  return {sm.p1, sm.p2, sm.p3};
}

// Cumulative state probabilities for t = 0..t_max, using zbar rows
// 0..t_max-1. Element t of the result is (P(S_t=2), P(S_t=3), P(S_t=1)).
inline std::vector<CumulativeProbs> cumulative_state_path(
    const ModelParams& params, const Eigen::Ref<const Vector>& x,
    const RowMatrix& zbar, int t_max) {
  if (t_max < 0) throw std::invalid_argument("negative time");
  check_dims(params, x, zbar.cols());
  if (zbar.rows() < t_max)
    throw DimensionError("covariate history has " +
                         std::to_string(zbar.rows()) + " rows; time " +
                         std::to_string(t_max) + " needs " +
                         std::to_string(t_max));
  const double pi = initial_risk_prob(params.alpha, x);
  std::vector<CumulativeProbs> out;
  out.reserve(t_max + 1);
  double survive = 1.0;  // prod_{u<s} P11(u)
  double to_stayer = 0.0;
  double to_mover = 0.0;
  out.push_back({1.0 - pi, 0.0, pi});
  for (int s = 0; s < t_max; ++s) {
    const auto p = transition_probs(params, x, zbar.row(s).transpose());
    to_stayer += survive * p.p12;
    to_mover += survive * p.p13;
    survive *= p.p11;
    out.push_back({(1.0 - pi) + pi * to_stayer, pi * to_mover, pi * survive});
  }
  return out;
}

inline CumulativeProbs cumulative_state_probs(const ModelParams& params,
                                              const Eigen::Ref<const Vector>& x,
                                              const RowMatrix& zbar, int t) {
  return cumulative_state_path(params, x, zbar, t).back();
}

}  // namespace moverstayer
