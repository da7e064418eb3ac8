#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "moverstayer/data.hpp"
#include "moverstayer/estimate.hpp"
#include "moverstayer/model.hpp"
#include "moverstayer/numeric.hpp"

namespace moverstayer {

// Classical mover-stayer model: stayer status fixed at baseline, logistic
// discrete-time hazard for the movers. gamma acts on the time-augmented row
// (z_t, t, t^2, ..., t^degree).
struct StaticParams {
  Vector alpha;  // d+1
  Vector beta;   // d+1
  Vector gamma;  // q + degree
  int degree = 0;

  static StaticParams zeros(Eigen::Index d, Eigen::Index q, int degree) {
    return {Vector::Zero(d + 1), Vector::Zero(d + 1), Vector::Zero(q + degree),
            degree};
  }
  Eigen::Index fixed_dim() const { return alpha.size() - 1; }
  Eigen::Index varying_dim() const { return gamma.size() - degree; }
  Eigen::Index size() const {
    return alpha.size() + beta.size() + gamma.size();
  }

  void validate() const {
    if (degree < 0 || degree > 3)
      throw std::invalid_argument("intercept degree must be in 0..3");
    if (alpha.size() < 1 || beta.size() != alpha.size() ||
        gamma.size() < degree)
      throw DimensionError("inconsistent static-model parameter lengths");
    if (!alpha.allFinite() || !beta.allFinite() || !gamma.allFinite())
      throw std::invalid_argument("static-model parameters must be finite");
  }

  Vector flatten() const {
    Vector v(size());
    v << alpha, beta, gamma;
    return v;
  }

  static StaticParams unflatten(const Vector& theta, Eigen::Index d,
                                Eigen::Index q, int degree) {
    if (theta.size() != 2 * (d + 1) + q + degree)
      throw DimensionError("static parameter vector has wrong length");
    return {theta.segment(0, d + 1), theta.segment(d + 1, d + 1),
            theta.tail(q + degree), degree};
  }
};

// Discrete-time hazard model without stayers (pi fixed at 1).
struct NoStayerParams {
  Vector beta;   // d+1
  Vector gamma;  // q + degree
  int degree = 0;

  static NoStayerParams zeros(Eigen::Index d, Eigen::Index q, int degree) {
    return {Vector::Zero(d + 1), Vector::Zero(q + degree), degree};
  }
  Eigen::Index fixed_dim() const { return beta.size() - 1; }
  Eigen::Index varying_dim() const { return gamma.size() - degree; }
  Eigen::Index size() const { return beta.size() + gamma.size(); }

  void validate() const {
    if (degree < 0 || degree > 3)
      throw std::invalid_argument("intercept degree must be in 0..3");
    if (beta.size() < 1 || gamma.size() < degree)
      throw DimensionError("inconsistent no-stayer parameter lengths");
    if (!beta.allFinite() || !gamma.allFinite())
      throw std::invalid_argument("no-stayer parameters must be finite");
  }

  Vector flatten() const {
    Vector v(size());
    v << beta, gamma;
    return v;
  }

  static NoStayerParams unflatten(const Vector& theta, Eigen::Index d,
                                  Eigen::Index q, int degree) {
    if (theta.size() != d + 1 + q + degree)
      throw DimensionError("no-stayer parameter vector has wrong length");
    return {theta.head(d + 1), theta.tail(q + degree), degree};
  }
};

inline std::vector<std::string> static_parameter_names(Eigen::Index d,
                                                       Eigen::Index q,
                                                       int degree,
                                                       bool with_alpha = true) {
  std::vector<std::string> names;
  auto block = [&](const std::string& base, Eigen::Index n) {
    for (Eigen::Index j = 0; j < n; ++j)
      names.push_back(base + "[" + std::to_string(j + 1) + "]");
  };
  if (with_alpha) block("alpha", d + 1);
  block("beta", d + 1);
  block("gamma", q);
  for (int k = 1; k <= degree; ++k) names.push_back("gamma[t" + std::to_string(k) + "]");
  return names;
}

namespace detail {

// Hazard linear predictor at time t with on-the-fly time powers.
inline double hazard_eta(const Vector& beta, const Vector& gamma, int degree,
                         const Eigen::Ref<const Vector>& x,
                         const RowMatrix& z, int t) {
  const Eigen::Index q = gamma.size() - degree;
  double eta = linear_predictor(beta, x) + gamma.head(q).dot(z.row(t).transpose());
  double power = 1.0;
  for (int k = 0; k < degree; ++k) {
    power *= t;
    eta += gamma[q + k] * power;
  }
  return eta;
}

// Shared evaluator. alpha == nullptr means no stayers. The gradient layout is
// [alpha?, beta, gamma].
inline double hazard_subject(const Vector* alpha, const Vector& beta,
                             const Vector& gamma, int degree,
                             const Subject& s, Vector* grad) {
  const int y = s.y;
  // log(1 - P_t) for t <= y, and log P_y
  double log_surv = 0.0;
  for (int t = 0; t < y; ++t)
    log_surv += log_sigmoid(-hazard_eta(beta, gamma, degree, s.x, s.z, t));
  const double eta_y = hazard_eta(beta, gamma, degree, s.x, s.z, y);

  double loglik;
  double w = 1.0;  // posterior probability of being susceptible
  double log_pi = 0.0, log_not_pi = 0.0, a = 0.0;
  if (alpha != nullptr) {
    a = linear_predictor(*alpha, s.x);
    log_pi = log_sigmoid(a);
    log_not_pi = log_sigmoid(-a);
  }
  if (s.delta == 1) {
    loglik = log_pi + log_surv + log_sigmoid(eta_y);
  } else {
    const double mover_term = log_pi + log_surv + log_sigmoid(-eta_y);
    if (alpha != nullptr) {
      const double terms[2] = {log_not_pi, mover_term};
      loglik = logsumexp(terms);
      w = std::exp(mover_term - loglik);
    } else {
      loglik = mover_term;
    }
  }

  if (grad != nullptr) {
    const Eigen::Index d1 = beta.size();
    const Eigen::Index q = gamma.size() - degree;
    Eigen::Index off = 0;
    if (alpha != nullptr) {
      const double da = w - sigmoid(a);
      (*grad)[0] += da;
      grad->segment(1, d1 - 1) += da * s.x;
      off = d1;
    }
    double sum_beta = 0.0;
    for (int t = 0; t <= y; ++t) {
      const double eta = t == y ? eta_y : hazard_eta(beta, gamma, degree, s.x, s.z, t);
      const double event = (s.delta == 1 && t == y) ? 1.0 : 0.0;
      const double e = w * (event - sigmoid(eta));
      sum_beta += e;
      grad->segment(off + d1, q) += e * s.z.row(t).transpose();
      double power = 1.0;
      for (int k = 0; k < degree; ++k) {
        power *= t;
        (*grad)[off + d1 + q + k] += e * power;
      }
    }
    (*grad)[off] += sum_beta;
    grad->segment(off + 1, d1 - 1) += sum_beta * s.x;
  }
  return loglik;
}

inline void check_hazard_dims(Eigen::Index d, Eigen::Index q,
                              const PanelDataset& data) {
  if (data.empty())
    throw DataError(DataError::Code::empty_dataset, "empty dataset");
  if (data.fixed_dim() != d || data.varying_dim() != q)
    throw DimensionError("dataset has d=" + std::to_string(data.fixed_dim()) +
                         ", q=" + std::to_string(data.varying_dim()) +
                         " but parameters have d=" + std::to_string(d) +
                         ", q=" + std::to_string(q));
}

}  // namespace detail

inline double static_log_likelihood(const StaticParams& params,
                                    const PanelDataset& data,
                                    Vector* grad = nullptr) {
  params.validate();
  detail::check_hazard_dims(params.fixed_dim(), params.varying_dim(), data);
  if (grad) grad->setZero(params.size());
  CompensatedSum sum;
  for (const auto& s : data.subjects())
    sum.add(detail::hazard_subject(&params.alpha, params.beta, params.gamma,
                                   params.degree, s, grad));
  return sum.value();
}

inline double no_stayer_log_likelihood(const NoStayerParams& params,
                                       const PanelDataset& data,
                                       Vector* grad = nullptr) {
  params.validate();
  detail::check_hazard_dims(params.fixed_dim(), params.varying_dim(), data);
  if (grad) grad->setZero(params.size());
  CompensatedSum sum;
  for (const auto& s : data.subjects())
    sum.add(detail::hazard_subject(nullptr, params.beta, params.gamma,
                                   params.degree, s, grad));
  return sum.value();
}

// Two-path (B = 0 / B = 1) likelihood of one subject in probability space.
inline double static_enumeration(const StaticParams& params,
                                 const Subject& s) {
  const double a = linear_predictor(params.alpha, s.x);
  const double pi = std::exp(a) / (1.0 + std::exp(a));
  double mover = pi;
  for (int t = 0; t <= s.y; ++t) {
    const double e = std::exp(detail::hazard_eta(params.beta, params.gamma,
                                                 params.degree, s.x, s.z, t));
    const double hazard = e / (1.0 + e);
    mover *= (t < s.y || s.delta == 0) ? 1.0 - hazard : hazard;
  }
  return s.delta == 1 ? mover : (1.0 - pi) + mover;
}

inline FitResult<StaticParams> fit_static(const PanelDataset& data,
                                          int intercept_degree,
                                          const FitConfig& config) {
  if (intercept_degree < 0 || intercept_degree > 3)
    throw std::invalid_argument("intercept degree must be in 0..3");
  if (data.empty())
    throw DataError(DataError::Code::empty_dataset, "empty dataset");
  const auto d = data.fixed_dim();
  const auto q = data.varying_dim();
  return fit_multistart<StaticParams>(
      [&](const Vector& theta, Vector& grad) {
        return static_log_likelihood(
            StaticParams::unflatten(theta, d, q, intercept_degree), data,
            &grad);
      },
      2 * (d + 1) + q + intercept_degree, config, [&](const Vector& theta) {
        return StaticParams::unflatten(theta, d, q, intercept_degree);
      });
}

inline FitResult<NoStayerParams> fit_no_stayer(const PanelDataset& data,
                                               int intercept_degree,
                                               const FitConfig& config) {
  if (intercept_degree < 0 || intercept_degree > 3)
    throw std::invalid_argument("intercept degree must be in 0..3");
  if (data.empty())
    throw DataError(DataError::Code::empty_dataset, "empty dataset");
  const auto d = data.fixed_dim();
  const auto q = data.varying_dim();
  return fit_multistart<NoStayerParams>(
      [&](const Vector& theta, Vector& grad) {
        return no_stayer_log_likelihood(
            NoStayerParams::unflatten(theta, d, q, intercept_degree), data,
            &grad);
      },
      d + 1 + q + intercept_degree, config, [&](const Vector& theta) {
        return NoStayerParams::unflatten(theta, d, q, intercept_degree);
      });
}

namespace detail {

inline std::vector<CumulativeProbs> hazard_cumulative_path(
    double pi, const Vector& beta, const Vector& gamma, int degree,
    const Eigen::Ref<const Vector>& x, const RowMatrix& zbar, int t_max) {
  if (t_max < 0) throw std::invalid_argument("negative time");
  if (zbar.rows() < t_max)
    throw DimensionError("covariate history has " +
                         std::to_string(zbar.rows()) + " rows; time " +
                         std::to_string(t_max) + " needs " +
                         std::to_string(t_max));
  if (zbar.cols() != gamma.size() - degree)
    throw DimensionError("covariate history has wrong number of columns");
  std::vector<CumulativeProbs> out;
  out.reserve(t_max + 1);
  double survive = 1.0;
  out.push_back({1.0 - pi, 0.0, pi});
  for (int s = 0; s < t_max; ++s) {
    survive *= sigmoid(-hazard_eta(beta, gamma, degree, x, zbar, s));
    out.push_back({1.0 - pi, pi * (1.0 - survive), pi * survive});
  }
  return out;
}

}  // namespace detail

// Stayer probability is constant 1 - pi; the mover probability is pi times
// the hazard model's cumulative distribution function.
inline std::vector<CumulativeProbs> static_cumulative_path(
    const StaticParams& params, const Eigen::Ref<const Vector>& x,
    const RowMatrix& zbar, int t_max) {
  params.validate();
  const double pi = initial_risk_prob(params.alpha, x);
  return detail::hazard_cumulative_path(pi, params.beta, params.gamma,
                                        params.degree, x, zbar, t_max);
}

inline CumulativeProbs static_cumulative_probs(
    const StaticParams& params, const Eigen::Ref<const Vector>& x,
    const RowMatrix& zbar, int t) {
  return static_cumulative_path(params, x, zbar, t).back();
}

inline std::vector<CumulativeProbs> no_stayer_cumulative_path(
    const NoStayerParams& params, const Eigen::Ref<const Vector>& x,
    const RowMatrix& zbar, int t_max) {
  params.validate();
  return detail::hazard_cumulative_path(1.0, params.beta, params.gamma,
                                        params.degree, x, zbar, t_max);
}

}  // namespace moverstayer
