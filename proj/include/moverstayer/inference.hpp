#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "moverstayer/data.hpp"
#include "moverstayer/estimate.hpp"
#include "moverstayer/likelihood.hpp"
#include "moverstayer/model.hpp"
#include "moverstayer/optimize.hpp"
#include "moverstayer/parallel.hpp"
#include "moverstayer/random.hpp"
#include "moverstayer/simulate.hpp"

namespace moverstayer {

inline constexpr double kWaldZ = 1.96;

enum class InferenceMethod { hessian, bootstrap, warp_speed };

inline std::string to_string(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::hessian: return "HESSIAN";
    case InferenceMethod::bootstrap: return "BOOTSTRAP";
    case InferenceMethod::warp_speed: return "WARP_SPEED";
  }
  return "?";
}

struct InferenceReport {
  Vector estimate;
  Vector se;
  Vector ci_lower;
  Vector ci_upper;
  InferenceMethod method = InferenceMethod::hessian;
  int n_boot = 0;
  int n_failed = 0;
  int n_separated = 0;
};

inline InferenceReport wald_report(const Vector& estimate, const Vector& se,
                                   InferenceMethod method, int n_boot = 0) {
  InferenceReport r;
  r.estimate = estimate;
  r.se = se;
  r.ci_lower = estimate - kWaldZ * se;
  r.ci_upper = estimate + kWaldZ * se;
  r.method = method;
  r.n_boot = n_boot;
  return r;
}

// Standard errors from the Hessian of a log-likelihood at its maximum.
// Throws HessianError naming the smallest eigenvalue of the observed
// information when it is not positive definite.
inline InferenceReport hessian_inference(const Matrix& loglik_hessian,
                                         const Vector& estimate) {
  if (loglik_hessian.rows() != estimate.size() ||
      loglik_hessian.cols() != estimate.size())
    throw DimensionError("Hessian does not match the parameter vector");
  if (!loglik_hessian.allFinite())
    throw HessianError("Hessian has non-finite entries", std::nan(""), -1);
  const Matrix info = -0.5 * (loglik_hessian + loglik_hessian.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
  if (eig.info() != Eigen::Success)
    throw HessianError("eigendecomposition of the information failed",
                       std::nan(""), -1);
  const Vector& values = eig.eigenvalues();  // ascending
  const double largest = std::abs(values[values.size() - 1]);
  if (!(values[0] > 1e-12 * std::max(1.0, largest)))
    throw HessianError("observed information is not positive definite: "
                       "eigenvalue " + std::to_string(0) + " = " +
                           format_double(values[0]),
                       values[0], 0);
  const Matrix& vecs = eig.eigenvectors();
  const Matrix cov =
      vecs * values.cwiseInverse().asDiagonal() * vecs.transpose();
  return wald_report(estimate, cov.diagonal().cwiseSqrt(),
                     InferenceMethod::hessian);
}

// Central-difference Hessian of `loglik` (function of the flattened
// parameters) at theta, then Wald inference.
template <class LogLik>
InferenceReport hessian_se(LogLik&& loglik, const Vector& theta,
                           double rel_step = 1e-4) {
  return hessian_inference(numerical_hessian(loglik, theta, rel_step), theta);
}

inline InferenceReport hessian_se(const ModelParams& theta,
                                  const PanelDataset& data,
                                  double rel_step = 1e-4) {
  detail::check_dataset(theta, data);
  DynamicObjective f(data);
  return hessian_se([&](const Vector& v) { return f(v); }, theta.flatten(),
                    rel_step);
}

// ---------------------------------------------------------------------------
// Nonparametric bootstrap over subjects

// Indices of one resample; replicate b uses its own stream.
using Resampler =
    std::function<std::vector<std::size_t>(int replicate, std::size_t n)>;

inline std::vector<std::size_t> resample_subjects(std::uint64_t seed,
                                                  int replicate,
                                                  std::size_t n,
                                                  StreamPurpose purpose =
                                                      StreamPurpose::bootstrap) {
  RandomStream rng(seed, purpose, static_cast<std::uint64_t>(replicate));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx)
    i = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<long long>(n) - 1));
  return idx;
}

struct BootstrapOptions {
  FitConfig fit;  // `initial` is replaced by theta_hat for every replicate
  bool exclude_separated = false;
  Resampler resampler;  // default: resample_subjects(seed, b, n)
  unsigned threads = 0;
};

struct BootstrapResult {
  InferenceReport report;
  std::vector<std::optional<Vector>> replicates;  // nullopt = failed fit
  std::vector<bool> separated;
};

// Per-coordinate sample standard deviation (n - 1 denominator).
inline Vector sample_sd(const std::vector<Vector>& draws) {
  if (draws.size() < 2)
    throw std::invalid_argument("standard deviation needs at least 2 draws");
  const Eigen::Index p = draws.front().size();
  Vector mean = Vector::Zero(p);
  for (const auto& v : draws) mean += v;
  mean /= static_cast<double>(draws.size());
  Vector ss = Vector::Zero(p);
  for (const auto& v : draws) ss += (v - mean).cwiseAbs2();
  return (ss / static_cast<double>(draws.size() - 1)).cwiseSqrt();
}

// Generic driver: `fit(resampled_data, replicate)` returns the flattened
// estimate and whether it is separated, or throws on failure.
template <class Fit>
BootstrapResult bootstrap_replicates(const PanelDataset& data,
                                     const Vector& theta_hat, int n_boot,
                                     std::uint64_t seed, Fit&& fit,
                                     const BootstrapOptions& options) {
  if (n_boot < 2) throw std::invalid_argument("n_boot must be >= 2");
  if (data.empty())
    throw DataError(DataError::Code::empty_dataset, "empty dataset");
  BootstrapResult out;
  out.replicates.resize(static_cast<std::size_t>(n_boot));
  out.separated.assign(static_cast<std::size_t>(n_boot), false);
  parallel_for(static_cast<std::size_t>(n_boot), options.threads,
               [&](std::size_t b) {
                 const int rep = static_cast<int>(b);
                 const auto idx = options.resampler
                                      ? options.resampler(rep, data.size())
                                      : resample_subjects(seed, rep, data.size());
                 const auto sample = data.subset(idx);
                 try {
                   auto [theta, separated] = fit(sample, rep);
                   if (theta.allFinite()) {
                     out.replicates[b] = std::move(theta);
                     out.separated[b] = separated;
                   }
                 } catch (const NumericalError&) {
                   // counted as a failed replicate below
                 }
               });

  std::vector<Vector> kept;
  int failed = 0;
  int separated = 0;
  for (std::size_t b = 0; b < out.replicates.size(); ++b) {
    if (!out.replicates[b]) {
      ++failed;
      continue;
    }
    if (out.separated[b]) {
      ++separated;
      if (options.exclude_separated) continue;
    }
    kept.push_back(*out.replicates[b]);
  }
  if (2 * failed > n_boot)
    throw BootstrapError(std::to_string(failed) + " of " +
                         std::to_string(n_boot) +
                         " bootstrap fits failed");
  if (kept.size() < 2)
    throw BootstrapError("fewer than 2 usable bootstrap replicates");
  out.report = wald_report(theta_hat, sample_sd(kept),
                           InferenceMethod::bootstrap, n_boot);
  out.report.n_failed = failed;
  out.report.n_separated = separated;
  return out;
}

// Bootstrap of the dynamic model: every replicate is refitted by direct
// maximization started from theta_hat.
inline BootstrapResult bootstrap_se(const PanelDataset& data,
                                    const ModelParams& theta_hat, int n_boot,
                                    std::uint64_t seed,
                                    const BootstrapOptions& options = {}) {
  detail::check_dataset(theta_hat, data);
  const Vector start = theta_hat.flatten();
  return bootstrap_replicates(
      data, start, n_boot, seed,
      [&](const PanelDataset& sample, int rep) {
        FitConfig cfg = options.fit;
        cfg.initial = start;
        cfg.seed = derive_seed(seed, StreamPurpose::start,
                               static_cast<std::uint64_t>(rep));
        auto res = fit_direct(sample, cfg);
        if (!res.converged)
          throw FitError("bootstrap fit did not converge: " + res.status);
        return std::pair{res.theta_hat.flatten(), res.any_separation()};
      },
      options);
}

// ---------------------------------------------------------------------------
// Coverage study with the warp-speed bootstrap

// Outcome of one Monte Carlo replication.
struct CoverageReplicate {
  bool ok = false;
  std::string error;
  Vector estimate;
  Vector bootstrap_estimate;       // fit on one resample of the replicate
  std::optional<Vector> hessian;   // Hessian standard errors, if available
  bool separated = false;
};

struct CoverageRow {
  std::string name;
  double truth = 0.0;
  // M1: Hessian standard errors, per-replication intervals
  double m1_coverage = std::nan("");
  double m1_length = std::nan("");
  double m1_sd = std::nan("");  // mean Hessian standard error
  // M2: warp-speed bootstrap, one pooled SD per coordinate
  double m2_coverage = std::nan("");
  double m2_length = std::nan("");
  double m2_sd = std::nan("");
  // Alternative pooling: SD of (bootstrap estimate - estimate)
  double deviation_sd = std::nan("");
  double deviation_coverage = std::nan("");
  double empirical_sd = std::nan("");  // SD of the estimates themselves
};

struct CoverageTable {
  std::vector<CoverageRow> rows;
  int n_reps = 0;
  int n_used = 0;
  int n_failed = 0;
  int n_hessian = 0;  // replications with Hessian standard errors
  int n_separated = 0;
};

// The M2 scale is the SD of the pooled bootstrap estimates across
// replications: each resample estimate carries both the sampling error of
// its replicate and the bootstrap error, which is the quantity the
// warp-speed scheme pools. The SD of the deviations is reported alongside.
inline CoverageTable coverage_from_replicates(
    const Vector& truth, const std::vector<CoverageReplicate>& reps,
    const std::vector<std::string>& names) {
  const Eigen::Index p = truth.size();
  if (static_cast<Eigen::Index>(names.size()) != p)
    throw DimensionError("names do not match the parameter vector");
  CoverageTable table;
  table.n_reps = static_cast<int>(reps.size());
  std::vector<Vector> est, boot, dev;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++table.n_failed;
      continue;
    }
    if (r.estimate.size() != p || r.bootstrap_estimate.size() != p)
      throw DimensionError("replicate has wrong dimension");
    if (r.separated) ++table.n_separated;
    est.push_back(r.estimate);
    boot.push_back(r.bootstrap_estimate);
    dev.push_back(r.bootstrap_estimate - r.estimate);
  }
  table.n_used = static_cast<int>(est.size());
  if (est.size() < 2) throw BootstrapError("fewer than 2 usable replications");
  const Vector m2_sd = sample_sd(boot);
  const Vector dev_sd = sample_sd(dev);
  const Vector emp_sd = sample_sd(est);

  for (Eigen::Index j = 0; j < p; ++j) {
    CoverageRow row;
    row.name = names[static_cast<std::size_t>(j)];
    row.truth = truth[j];
    row.m2_sd = m2_sd[j];
    row.m2_length = 2.0 * kWaldZ * m2_sd[j];
    row.deviation_sd = dev_sd[j];
    row.empirical_sd = emp_sd[j];
    int hit_m2 = 0, hit_dev = 0;
    for (const auto& e : est) {
      const double err = std::abs(e[j] - truth[j]);
      hit_m2 += err <= kWaldZ * m2_sd[j];
      hit_dev += err <= kWaldZ * dev_sd[j];
    }
    row.m2_coverage = static_cast<double>(hit_m2) / static_cast<double>(est.size());
    row.deviation_coverage =
        static_cast<double>(hit_dev) / static_cast<double>(est.size());

    int n1 = 0, hit1 = 0;
    double se_sum = 0.0;
    for (const auto& r : reps) {
      if (!r.ok || !r.hessian) continue;
      const double se = (*r.hessian)[j];
      ++n1;
      se_sum += se;
      hit1 += std::abs(r.estimate[j] - truth[j]) <= kWaldZ * se;
    }
    if (n1 > 0) {
      row.m1_coverage = static_cast<double>(hit1) / n1;
      row.m1_sd = se_sum / n1;
      row.m1_length = 2.0 * kWaldZ * row.m1_sd;
    }
    table.rows.push_back(std::move(row));
  }
  for (const auto& r : reps) table.n_hessian += r.ok && r.hessian.has_value();
  return table;
}

struct CoverageOptions {
  FitConfig fit;  // `initial` is replaced per replication
  double hessian_step = 1e-4;
  bool hessian = true;
  unsigned threads = 0;
};

// Per replication: simulate from `setting` (seeded per replication), fit
// from the truth, compute Hessian standard errors, draw one bootstrap
// resample and refit it from the replicate's estimate.
inline std::vector<CoverageReplicate> warp_speed_replicates(
    const SimulationConfig& setting, int n_reps, std::uint64_t seed,
    const CoverageOptions& options = {}) {
  setting.validate();
  if (n_reps < 1) throw std::invalid_argument("n_reps must be >= 1");
  const Vector truth = setting.true_params.flatten();
  std::vector<CoverageReplicate> reps(static_cast<std::size_t>(n_reps));
  parallel_for(reps.size(), options.threads, [&](std::size_t i) {
    auto& out = reps[i];
    try {
      SimulationConfig cfg = setting;
      cfg.seed = derive_seed(seed, StreamPurpose::replication, i);
      const auto data = simulate_dataset(cfg).data;

      FitConfig fc = options.fit;
      fc.initial = truth;
      auto fit = fit_direct(data, fc);
      if (!fit.converged) throw FitError("fit did not converge: " + fit.status);
      out.estimate = fit.theta_hat.flatten();
      out.separated = fit.any_separation();

      if (options.hessian) {
        try {
          out.hessian = hessian_se(fit.theta_hat, data, options.hessian_step).se;
        } catch (const HessianError&) {
        }
      }

      const auto idx = resample_subjects(seed, static_cast<int>(i),
                                         data.size(), StreamPurpose::warp_speed);
      fc.initial = out.estimate;
      auto boot = fit_direct(data.subset(idx), fc);
      if (!boot.converged)
        throw FitError("bootstrap fit did not converge: " + boot.status);
      out.bootstrap_estimate = boot.theta_hat.flatten();
      out.ok = true;
    } catch (const NumericalError& e) {
      out.ok = false;
      out.error = e.what();
    }
  });
  return reps;
}

inline CoverageTable warp_speed_coverage(const SimulationConfig& setting,
                                         int n_reps, std::uint64_t seed,
                                         const CoverageOptions& options = {}) {
  if (n_reps < 100)
    throw std::invalid_argument("warp-speed coverage needs n_reps >= 100");
  const auto reps = warp_speed_replicates(setting, n_reps, seed, options);
  const auto& p = setting.true_params;
  return coverage_from_replicates(
      p.flatten(), reps, parameter_names(p.fixed_dim(), p.varying_dim()));
}

}  // namespace moverstayer
