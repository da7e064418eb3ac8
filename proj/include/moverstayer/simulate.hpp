#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "moverstayer/data.hpp"
#include "moverstayer/likelihood.hpp"
#include "moverstayer/model.hpp"
#include "moverstayer/random.hpp"

namespace moverstayer {

struct FixedCovariateSpec {
  enum class Kind { standard_normal, bernoulli };
  Kind kind = Kind::standard_normal;
  double p = 0.5;  // bernoulli only
};

struct VaryingCovariateSpec {
  enum class Kind {
    // z_0 = 0, z_t = z_{t-1} + N(mean, sd^2)
    normal_walk,
    // z_0 ~ Uniform{1..5}, z_t = z_{t-1} + Binom(2, 0.5) - 1
    integer_walk,
  };
  Kind kind = Kind::normal_walk;
  double mean = 0.0;
  double sd = 1.0;
};

struct SimulationConfig {
  std::size_t n = 1000;
  int k_max = 5;  // event times in {0, ..., k_max-1}
  ModelParams true_params;
  std::vector<FixedCovariateSpec> fixed_covariates;
  std::vector<VaryingCovariateSpec> varying_covariates;
  // Censoring: C = floor(1 + Exp(rate)), truncated at k_max - 1.
  double censoring_rate = 0.03;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1) throw std::invalid_argument("simulation needs n >= 1");
    if (k_max < 2) throw std::invalid_argument("simulation needs k_max >= 2");
    if (!(censoring_rate > 0.0))
      throw std::invalid_argument("censoring rate must be positive");
    true_params.validate();
    if (static_cast<Eigen::Index>(fixed_covariates.size()) !=
        true_params.fixed_dim())
      throw DimensionError("fixed covariate generators do not match alpha");
    if (static_cast<Eigen::Index>(varying_covariates.size()) !=
        true_params.varying_dim())
      throw DimensionError(
          "time-varying covariate generators do not match gamma");
    for (const auto& f : fixed_covariates)
      if (f.kind == FixedCovariateSpec::Kind::bernoulli &&
          !(f.p >= 0.0 && f.p <= 1.0))
        throw std::invalid_argument("bernoulli probability outside [0, 1]");
    for (const auto& v : varying_covariates)
      if (v.kind == VaryingCovariateSpec::Kind::normal_walk && !(v.sd >= 0.0))
        throw std::invalid_argument("negative increment sd");
  }
};

// Ground truth for one simulated subject (evaluation only).
struct LatentTrajectory {
  std::vector<int> states;  // S_0 .. S_K, values in {1, 2, 3}
  int b0 = 1;
  int r = kNever;      // time of the 1->2 transition
  int event = kNever;  // time of the 1->3 transition
  RowMatrix z_full;    // K x q covariate path, rows 0..K-1
};

struct SimulatedPanel {
  PanelDataset data;
  std::vector<LatentTrajectory> truth;
};

enum class Setting { s1, s2, s3 };

inline Setting parse_setting(const std::string& name) {
  if (name == "s1" || name == "S1") return Setting::s1;
  if (name == "s2" || name == "S2") return Setting::s2;
  if (name == "s3" || name == "S3") return Setting::s3;
  throw std::invalid_argument("unknown setting '" + name + "'");
}

inline std::string to_string(Setting s) {
  switch (s) {
    case Setting::s1: return "s1";
    case Setting::s2: return "s2";
    case Setting::s3: return "s3";
  }
  return "?";
}

// The three reference simulation designs. All share x = (N(0,1),
// Bernoulli(0.4)) and z = (normal walk with N(0.5, 1) increments, integer
// walk); they differ in coefficients, censoring rate and follow-up.
inline SimulationConfig builtin_setting(Setting id) {
  SimulationConfig c;
  c.fixed_covariates = {{FixedCovariateSpec::Kind::standard_normal, 0.5},
                        {FixedCovariateSpec::Kind::bernoulli, 0.4}};
  c.varying_covariates = {
      {VaryingCovariateSpec::Kind::normal_walk, 0.5, 1.0},
      {VaryingCovariateSpec::Kind::integer_walk, 0.0, 0.0}};
  auto vec = [](std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) out[i++] = e;
    return out;
  };
  auto& p = c.true_params;
  switch (id) {
    case Setting::s1:
      p.alpha = vec({0.8, 0.5, -1.0});
      p.beta12 = vec({-1.0, 0.6, -0.1});
      p.beta13 = vec({-2.0, -0.4, 0.1});
      p.gamma12 = vec({0.11, -0.2});
      p.gamma13 = vec({-0.5, 0.3});
      c.censoring_rate = 0.03;
      c.k_max = 5;
      break;
    case Setting::s2:
      p.alpha = vec({2.3, 0.5, -1.0});
      p.beta12 = vec({-2.0, 0.6, -0.1});
      p.beta13 = vec({-1.5, -0.4, 0.1});
      p.gamma12 = vec({0.11, -0.2});
      p.gamma13 = vec({-0.5, 0.3});
      c.censoring_rate = 0.05;
      c.k_max = 5;
      break;
    case Setting::s3:
      p.alpha = vec({0.8, 0.5, -1.0});
      p.beta12 = vec({-1.0, 0.6, -0.1});
      p.beta13 = vec({-2.0, -0.1, 0.3});
      p.gamma12 = vec({0.2, -0.2});
      p.gamma13 = vec({-0.1, 0.1});
      c.censoring_rate = 0.03;
      c.k_max = 10;
      break;
  }
  return c;
}

namespace detail {

// Covariate paths are drawn before, and independently of, the state path:
// the generators never see S_t.
inline RowMatrix draw_covariate_path(
    const std::vector<VaryingCovariateSpec>& specs, int k_max,
    RandomStream& rng) {
  RowMatrix z(k_max, static_cast<Eigen::Index>(specs.size()));
  for (std::size_t j = 0; j < specs.size(); ++j) {
    const auto& spec = specs[j];
    const auto col = static_cast<Eigen::Index>(j);
    double value = 0.0;
    if (spec.kind == VaryingCovariateSpec::Kind::integer_walk)
      value = static_cast<double>(rng.uniform_int(1, 5));
    z(0, col) = value;
    for (int t = 1; t < k_max; ++t) {
      if (spec.kind == VaryingCovariateSpec::Kind::normal_walk)
        value += rng.normal(spec.mean, spec.sd);
      else
        value += static_cast<double>(rng.binomial(2, 0.5) - 1);
      z(t, col) = value;
    }
  }
  return z;
}

}  // namespace detail

// Simulates one subject from its own random stream (seed, index), so the
// first m subjects of any run with the same seed are identical.
inline std::pair<Subject, LatentTrajectory> simulate_subject(
    const SimulationConfig& config, std::size_t index) {
  RandomStream rng(config.seed, StreamPurpose::subject, index);
  const auto& params = config.true_params;
  const int k_max = config.k_max;

  Vector x(static_cast<Eigen::Index>(config.fixed_covariates.size()));
  for (std::size_t j = 0; j < config.fixed_covariates.size(); ++j) {
    const auto& spec = config.fixed_covariates[j];
    x[static_cast<Eigen::Index>(j)] =
        spec.kind == FixedCovariateSpec::Kind::standard_normal
            ? rng.normal()
            : (rng.bernoulli(spec.p) ? 1.0 : 0.0);
  }

  LatentTrajectory truth;
  truth.b0 = rng.bernoulli(initial_risk_prob(params.alpha, x)) ? 1 : 0;
  truth.z_full =
      detail::draw_covariate_path(config.varying_covariates, k_max, rng);

  truth.states.assign(static_cast<std::size_t>(k_max) + 1, 0);
  int state = truth.b0 == 1 ? 1 : 2;
  truth.states[0] = state;
  for (int t = 0; t < k_max; ++t) {
    // One uniform per interval whatever the state, keeping draws aligned.
    const double u = rng.uniform();
    if (state == 1) {
      const auto p = transition_probs(params, x, truth.z_full.row(t).transpose());
      if (u < p.p12) {
        state = 2;
        truth.r = t;
      } else if (u < p.p12 + p.p13) {
        state = 3;
        truth.event = t;
      }
    }
    truth.states[static_cast<std::size_t>(t) + 1] = state;
  }

  const double c_cont = 1.0 + rng.exponential(config.censoring_rate);
  const int censor =
      static_cast<int>(std::min<double>(std::floor(c_cont), k_max - 1));

  Subject s;
  s.id = std::to_string(index + 1);
  // The move is observed when it happens in (Y, Y+1] with Y <= C.
  if (truth.event != kNever && truth.event <= censor) {
    s.delta = 1;
    s.y = truth.event;
  } else {
    s.delta = 0;
    s.y = censor;
  }
  s.x = std::move(x);
  s.z = truth.z_full.topRows(s.y + 1);
  return {std::move(s), std::move(truth)};
}

inline SimulatedPanel simulate_dataset(const SimulationConfig& config) {
  config.validate();
  std::vector<Subject> subjects;
  std::vector<LatentTrajectory> truth;
  subjects.reserve(config.n);
  truth.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    auto [s, tr] = simulate_subject(config, i);
    subjects.push_back(std::move(s));
    truth.push_back(std::move(tr));
  }
  return {PanelDataset(std::move(subjects), config.true_params.fixed_dim(),
                       config.true_params.varying_dim()),
          std::move(truth)};
}

// Percentages by time: latent state occupancy for t = 0..K, and, for
// t = 0..K-1, subjects observed to move at t and subjects censored at t.
struct OccupancyRow {
  int t = 0;
  double state1 = 0, state2 = 0, state3 = 0;
  std::optional<double> observed_movers;
  std::optional<double> censored;
};

inline std::vector<OccupancyRow> occupancy_table(
    const std::vector<LatentTrajectory>& truth, const PanelDataset& data) {
  if (truth.size() != data.size())
    throw DimensionError("latent trajectories and dataset are misaligned");
  if (truth.empty()) return {};
  const std::size_t horizon = truth.front().states.size();
  for (const auto& tr : truth)
    if (tr.states.size() != horizon)
      throw DimensionError("latent trajectories have different lengths");
  const int k_max = static_cast<int>(horizon) - 1;
  const double n = static_cast<double>(truth.size());

  std::vector<OccupancyRow> rows(horizon);
  std::vector<double> movers(horizon, 0.0), censored(horizon, 0.0);
  std::vector<std::array<double, 3>> counts(horizon, {0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t t = 0; t < horizon; ++t) {
      const int s = truth[i].states[t];
      if (s < 1 || s > 3) throw DimensionError("invalid latent state");
      counts[t][static_cast<std::size_t>(s - 1)] += 1.0;
    }
    const auto& subj = data[i];
    if (subj.y < 0 || subj.y >= k_max)
      throw DimensionError("observation time outside the follow-up");
    (subj.delta == 1 ? movers : censored)[static_cast<std::size_t>(subj.y)] +=
        1.0;
  }
  for (std::size_t t = 0; t < horizon; ++t) {
    auto& row = rows[t];
    row.t = static_cast<int>(t);
    row.state1 = 100.0 * counts[t][0] / n;
    row.state2 = 100.0 * counts[t][1] / n;
    row.state3 = 100.0 * counts[t][2] / n;
    if (static_cast<int>(t) < k_max) {
      row.observed_movers = 100.0 * movers[t] / n;
      row.censored = 100.0 * censored[t] / n;
    }
  }
  return rows;
}

}  // namespace moverstayer
