#pragma once

// JSON encoding of fit and inference results for the command-line tool.

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "moverstayer/moverstayer.hpp"

namespace moverstayer::cli {

using nlohmann::ordered_json;

inline ordered_json to_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector vector_from_json(const ordered_json& j, const std::string& what) {
  if (!j.is_array())
    throw DataError(DataError::Code::bad_number, what + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw DataError(DataError::Code::bad_number,
                      what + "[" + std::to_string(i) + "] is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Code::io, "cannot open '" + path + "'");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(DataError::Code::io,
                    "'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Code::io, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

// Parameters of any of the three models, as stored in estimates.json.
struct StoredEstimate {
  ModelKind model = ModelKind::dynamic;
  Eigen::Index d = 0;
  Eigen::Index q = 0;  // before time polynomial terms
  int degree = 0;
  Vector theta;

  Eigen::Index expected_size() const {
    switch (model) {
      case ModelKind::dynamic: return 3 * (d + 1) + 2 * (q + degree);
      case ModelKind::static_model: return 2 * (d + 1) + q + degree;
      case ModelKind::no_stayer: return d + 1 + q + degree;
    }
    return 0;
  }

  std::vector<std::string> names() const {
    if (model == ModelKind::dynamic) return parameter_names(d, q + degree);
    return static_parameter_names(d, q, degree,
                                  model == ModelKind::static_model);
  }
};

inline StoredEstimate read_estimate(const std::string& path) {
  const auto j = read_json_file(path);
  StoredEstimate e;
  try {
    e.model = parse_model(j.at("model").get<std::string>());
    e.d = j.at("d").get<Eigen::Index>();
    e.q = j.at("q").get<Eigen::Index>();
    e.degree = j.value("degree", 0);
    e.theta = vector_from_json(j.at("theta"), "theta");
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(DataError::Code::io,
                    "'" + path + "' is not an estimates file: " + ex.what());
  }
  if (e.theta.size() != e.expected_size())
    throw DimensionError("'" + path + "' has " +
                         std::to_string(e.theta.size()) + " coefficients, " +
                         "expected " + std::to_string(e.expected_size()));
  return e;
}

inline ordered_json inference_json(const InferenceReport& r,
                                   const std::vector<std::string>& names) {
  ordered_json j;
  j["method"] = to_string(r.method);
  j["theta_order"] = names;
  j["estimate"] = to_json(r.estimate);
  j["se"] = to_json(r.se);
  j["ci_lower"] = to_json(r.ci_lower);
  j["ci_upper"] = to_json(r.ci_upper);
  j["n_boot"] = r.n_boot;
  j["n_failed"] = r.n_failed;
  j["n_separated"] = r.n_separated;
  return j;
}

// Simulation designs as JSON. Keys absent from the object keep the values
// of `base`.
inline ordered_json params_json(const ModelParams& p) {
  ordered_json j;
  j["alpha"] = to_json(p.alpha);
  j["beta12"] = to_json(p.beta12);
  j["beta13"] = to_json(p.beta13);
  j["gamma12"] = to_json(p.gamma12);
  j["gamma13"] = to_json(p.gamma13);
  return j;
}

inline ordered_json simulation_json(const SimulationConfig& c) {
  ordered_json j;
  j["n"] = c.n;
  j["seed"] = c.seed;
  j["k_max"] = c.k_max;
  j["censoring_rate"] = c.censoring_rate;
  j["true_params"] = params_json(c.true_params);
  auto& fixed = j["fixed_covariates"] = ordered_json::array();
  for (const auto& f : c.fixed_covariates) {
    if (f.kind == FixedCovariateSpec::Kind::bernoulli)
      fixed.push_back({{"kind", "bernoulli"}, {"p", f.p}});
    else
      fixed.push_back({{"kind", "normal"}});
  }
  auto& varying = j["varying_covariates"] = ordered_json::array();
  for (const auto& v : c.varying_covariates) {
    if (v.kind == VaryingCovariateSpec::Kind::integer_walk)
      varying.push_back({{"kind", "integer_walk"}});
    else
      varying.push_back(
          {{"kind", "normal_walk"}, {"mean", v.mean}, {"sd", v.sd}});
  }
  return j;
}

// Keys of a simulation design that have no command-line flag.
inline bool is_design_key(const std::string& key) {
  return key == "k_max" || key == "censoring_rate" || key == "true_params" ||
         key == "fixed_covariates" || key == "varying_covariates";
}

inline SimulationConfig apply_design(const ordered_json& j,
                                     SimulationConfig c) {
  try {
    if (j.contains("k_max")) c.k_max = j["k_max"].get<int>();
    if (j.contains("censoring_rate"))
      c.censoring_rate = j["censoring_rate"].get<double>();
    if (j.contains("true_params")) {
      const auto& p = j["true_params"];
      auto& t = c.true_params;
      if (p.contains("alpha")) t.alpha = vector_from_json(p["alpha"], "alpha");
      if (p.contains("beta12")) t.beta12 = vector_from_json(p["beta12"], "beta12");
      if (p.contains("beta13")) t.beta13 = vector_from_json(p["beta13"], "beta13");
      if (p.contains("gamma12")) t.gamma12 = vector_from_json(p["gamma12"], "gamma12");
      if (p.contains("gamma13")) t.gamma13 = vector_from_json(p["gamma13"], "gamma13");
    }
    if (j.contains("fixed_covariates")) {
      c.fixed_covariates.clear();
      for (const auto& f : j["fixed_covariates"]) {
        const auto kind = f.at("kind").get<std::string>();
        if (kind == "normal")
          c.fixed_covariates.push_back({FixedCovariateSpec::Kind::standard_normal});
        else if (kind == "bernoulli")
          c.fixed_covariates.push_back(
              {FixedCovariateSpec::Kind::bernoulli, f.value("p", 0.5)});
        else
          throw std::invalid_argument("unknown fixed covariate kind '" + kind + "'");
      }
    }
    if (j.contains("varying_covariates")) {
      c.varying_covariates.clear();
      for (const auto& v : j["varying_covariates"]) {
        const auto kind = v.at("kind").get<std::string>();
        if (kind == "normal_walk")
          c.varying_covariates.push_back({VaryingCovariateSpec::Kind::normal_walk,
                                          v.value("mean", 0.0), v.value("sd", 1.0)});
        else if (kind == "integer_walk")
          c.varying_covariates.push_back({VaryingCovariateSpec::Kind::integer_walk});
        else
          throw std::invalid_argument("unknown time-varying covariate kind '" +
                                      kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad simulation design: ") + e.what());
  }
  return c;
}

}  // namespace moverstayer::cli
