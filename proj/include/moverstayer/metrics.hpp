#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "moverstayer/compare.hpp"
#include "moverstayer/estimate.hpp"
#include "moverstayer/model.hpp"
#include "moverstayer/parallel.hpp"
#include "moverstayer/simulate.hpp"

namespace moverstayer {

enum class StateKind { stayer, mover };

// Mean absolute deviation between two aligned lists of probabilities.
inline double mad(std::span<const double> model_probs,
                  std::span<const double> truth_probs) {
  if (model_probs.size() != truth_probs.size())
    throw DimensionError("probability lists are misaligned");
  if (model_probs.empty()) throw std::invalid_argument("no subjects");
  double sum = 0.0;
  for (std::size_t i = 0; i < model_probs.size(); ++i)
    sum += std::abs(model_probs[i] - truth_probs[i]);
  return sum / static_cast<double>(model_probs.size());
}

// MAD of P(S_t = k) over subjects; each inner vector is a subject's
// cumulative path for times 0..K.
inline double mad(const std::vector<std::vector<CumulativeProbs>>& model,
                  const std::vector<std::vector<CumulativeProbs>>& truth,
                  StateKind state, int t) {
  if (model.size() != truth.size())
    throw DimensionError("probability lists are misaligned");
  std::vector<double> a(model.size()), b(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto ti = static_cast<std::size_t>(t);
    if (t < 0 || ti >= model[i].size() || ti >= truth[i].size())
      throw DimensionError("time " + std::to_string(t) +
                           " outside the probability path");
    a[i] = state == StateKind::stayer ? model[i][ti].stayer : model[i][ti].mover;
    b[i] = state == StateKind::stayer ? truth[i][ti].stayer : truth[i][ti].mover;
  }
  return mad(a, b);
}

enum class ModelKind { dynamic, static_model, no_stayer };

inline std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::dynamic: return "dynamic";
    case ModelKind::static_model: return "static";
    case ModelKind::no_stayer: return "nostayer";
  }
  return "?";
}

inline ModelKind parse_model(const std::string& name) {
  if (name == "dynamic") return ModelKind::dynamic;
  if (name == "static") return ModelKind::static_model;
  if (name == "nostayer" || name == "no-stayer") return ModelKind::no_stayer;
  throw std::invalid_argument("unknown model '" + name + "'");
}

struct StudyOptions {
  std::vector<ModelKind> models{ModelKind::dynamic, ModelKind::static_model,
                                ModelKind::no_stayer};
  FitConfig fit;               // seed and initial are set per replication
  int comparator_starts = 3;   // random starts on top of the zero start
  int comparator_degree = 0;   // time polynomial for the comparators
  double extreme_threshold = 6.0;
  unsigned threads = 0;
};

struct ModelRun {
  bool ok = false;
  bool converged = false;
  bool separated = false;
  std::string error;
  Vector estimate;
  double loglik = std::nan("");
  std::vector<double> mad_stayer;  // t = 0..K
  std::vector<double> mad_mover;
};

struct ReplicationRecord {
  std::vector<ModelRun> runs;  // aligned with StudyReport::models
};

struct StudyReport {
  SimulationConfig setting;
  std::vector<ModelKind> models;
  int comparator_degree = 0;
  double extreme_threshold = 6.0;
  std::vector<ReplicationRecord> replications;
  std::vector<OccupancyRow> occupancy;  // first replication
  double seconds = 0.0;

  std::size_t model_index(ModelKind m) const {
    const auto it = std::find(models.begin(), models.end(), m);
    if (it == models.end())
      throw std::invalid_argument("model " + to_string(m) + " not in study");
    return static_cast<std::size_t>(it - models.begin());
  }

  int n_failed(ModelKind m) const {
    const auto k = model_index(m);
    int n = 0;
    for (const auto& r : replications) n += !r.runs[k].ok;
    return n;
  }

  // Fraction of finished dynamic fits with any |estimate| above the
  // extreme threshold.
  double extreme_fraction() const {
    const auto k = model_index(ModelKind::dynamic);
    int used = 0, extreme = 0;
    for (const auto& r : replications) {
      const auto& run = r.runs[k];
      if (!run.ok) continue;
      ++used;
      extreme += run.estimate.cwiseAbs().maxCoeff() > extreme_threshold;
    }
    return used ? static_cast<double>(extreme) / used : std::nan("");
  }

  std::vector<double> mad_values(ModelKind m, StateKind s, int t) const {
    const auto k = model_index(m);
    std::vector<double> v;
    for (const auto& r : replications) {
      const auto& run = r.runs[k];
      if (!run.ok) continue;
      const auto& curve = s == StateKind::stayer ? run.mad_stayer : run.mad_mover;
      v.push_back(curve.at(static_cast<std::size_t>(t)));
    }
    return v;
  }

  double median_mad(ModelKind m, StateKind s, int t) const {
    return median(mad_values(m, s, t));
  }

  static double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }

  // Finished dynamic estimates, in replication order.
  std::vector<Vector> dynamic_estimates() const {
    const auto k = model_index(ModelKind::dynamic);
    std::vector<Vector> out;
    for (const auto& r : replications)
      if (r.runs[k].ok) out.push_back(r.runs[k].estimate);
    return out;
  }
};

namespace detail {

using ProbPaths = std::vector<std::vector<CumulativeProbs>>;

inline void fill_mad(const ProbPaths& model, const ProbPaths& truth, int k_max,
                     ModelRun& run) {
  run.mad_stayer.resize(static_cast<std::size_t>(k_max) + 1);
  run.mad_mover.resize(static_cast<std::size_t>(k_max) + 1);
  for (int t = 0; t <= k_max; ++t) {
    run.mad_stayer[static_cast<std::size_t>(t)] =
        mad(model, truth, StateKind::stayer, t);
    run.mad_mover[static_cast<std::size_t>(t)] =
        mad(model, truth, StateKind::mover, t);
  }
}

}  // namespace detail

// One replication: simulate, fit every requested model, and compute MAD
// curves on the full simulated covariate histories. The dynamic model is
// fitted once from the truth; comparators use multi-start.
inline ReplicationRecord run_replication(const SimulationConfig& setting,
                                         std::uint64_t seed, std::size_t index,
                                         const StudyOptions& options,
                                         std::vector<OccupancyRow>* occupancy) {
  SimulationConfig cfg = setting;
  cfg.seed = derive_seed(seed, StreamPurpose::replication, index);
  const auto sim = simulate_dataset(cfg);
  if (occupancy) *occupancy = occupancy_table(sim.truth, sim.data);
  const int k_max = cfg.k_max;
  const auto& data = sim.data;

  detail::ProbPaths truth_paths(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    truth_paths[i] = cumulative_state_path(cfg.true_params, data[i].x,
                                           sim.truth[i].z_full, k_max);

  ReplicationRecord rec;
  detail::ProbPaths paths(data.size());
  for (const auto model : options.models) {
    ModelRun run;
    try {
      FitConfig fc = options.fit;
      fc.seed = derive_seed(seed, StreamPurpose::start, index);
      switch (model) {
        case ModelKind::dynamic: {
          fc.initial = cfg.true_params.flatten();
          fc.n_starts = 1;
          const auto fit = fit_direct(data, fc);
          run.estimate = fit.theta_hat.flatten();
          run.loglik = fit.loglik;
          run.converged = fit.converged;
          run.separated = fit.any_separation();
          for (std::size_t i = 0; i < data.size(); ++i)
            paths[i] = cumulative_state_path(fit.theta_hat, data[i].x,
                                             sim.truth[i].z_full, k_max);
          break;
        }
        case ModelKind::static_model: {
          fc.initial.reset();
          fc.n_starts = options.comparator_starts + 1;
          const auto fit = fit_static(data, options.comparator_degree, fc);
          run.estimate = fit.theta_hat.flatten();
          run.loglik = fit.loglik;
          run.converged = fit.converged;
          run.separated = fit.any_separation();
          for (std::size_t i = 0; i < data.size(); ++i)
            paths[i] = static_cumulative_path(fit.theta_hat, data[i].x,
                                              sim.truth[i].z_full, k_max);
          break;
        }
        case ModelKind::no_stayer: {
          fc.initial.reset();
          fc.n_starts = options.comparator_starts + 1;
          const auto fit = fit_no_stayer(data, options.comparator_degree, fc);
          run.estimate = fit.theta_hat.flatten();
          run.loglik = fit.loglik;
          run.converged = fit.converged;
          run.separated = fit.any_separation();
          for (std::size_t i = 0; i < data.size(); ++i)
            paths[i] = no_stayer_cumulative_path(fit.theta_hat, data[i].x,
                                                 sim.truth[i].z_full, k_max);
          break;
        }
      }
      detail::fill_mad(paths, truth_paths, k_max, run);
      run.ok = true;
    } catch (const NumericalError& e) {
      run.error = e.what();
    }
    rec.runs.push_back(std::move(run));
  }
  return rec;
}

inline StudyReport run_replication_study(const SimulationConfig& setting,
                                         int n_reps, std::uint64_t seed,
                                         const StudyOptions& options = {}) {
  setting.validate();
  if (n_reps < 2) throw std::invalid_argument("n_reps must be >= 2");
  if (options.models.empty()) throw std::invalid_argument("no models requested");
  const auto start = std::chrono::steady_clock::now();
  StudyReport report;
  report.setting = setting;
  report.models = options.models;
  report.comparator_degree = options.comparator_degree;
  report.extreme_threshold = options.extreme_threshold;
  report.replications.resize(static_cast<std::size_t>(n_reps));
  parallel_for(report.replications.size(), options.threads,
               [&](std::size_t i) {
                 report.replications[i] = run_replication(
                     setting, seed, i, options,
                     i == 0 ? &report.occupancy : nullptr);
               });
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return report;
}

}  // namespace moverstayer
