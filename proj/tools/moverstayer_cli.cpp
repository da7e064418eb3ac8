// moverstayer: simulate, fit, predict, bootstrap and study from the shell.
//
// Exit codes: 0 success, 1 usage, 2 invalid data, 3 numerical failure.
// Errors are written to stderr as a single JSON object.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli_json.hpp"
#include "moverstayer/moverstayer.hpp"

namespace fs = std::filesystem;
using namespace moverstayer;
using namespace moverstayer::cli;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string version_line() { return std::string("moverstayer ") + kVersion; }

std::vector<std::string> preamble(const ordered_json& config) {
  return {version_line() + " config=" + config.dump()};
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError(DataError::Code::io, "cannot write '" + path.string() + "'");
  return out;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw DataError(DataError::Code::io,
                    "cannot create directory '" + dir + "': " + ec.message());
}

ordered_json envelope(const std::string& command, const ordered_json& config) {
  ordered_json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["config"] = config;
  return j;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Flag values from a JSON config file become ordinary command-line tokens
// placed before the user's own flags; every option keeps its last value, so
// explicit flags win.
std::vector<std::string> config_tokens(const ordered_json& config) {
  std::vector<std::string> tokens;
  for (const auto& [key, value] : config.items()) {
    if (is_design_key(key)) continue;
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      tokens.push_back(flag + (value.get<bool>() ? "" : "=false"));
    } else if (value.is_string()) {
      tokens.push_back(flag);
      tokens.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      tokens.push_back(flag);
      tokens.push_back(joined);
    } else if (value.is_number()) {
      tokens.push_back(flag);
      tokens.push_back(value.dump());
    } else {
      throw UsageError("config key '" + key + "' has an unsupported value");
    }
  }
  return tokens;
}

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Shared option blocks

struct FitFlags {
  int starts = 1;
  std::uint64_t seed = 1;
  int max_iter = 1000;
  double tol = 1e-8;
  double init_box = 2.0;
  double separation_threshold = 15.0;

  void add(CLI::App* app) {
    app->add_option("--starts", starts,
                    "random starts (tried after the zero or initial start)")
        ->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "seed for random starts and resampling");
    app->add_option("--max-iter", max_iter, "iteration limit")
        ->check(CLI::PositiveNumber);
    app->add_option("--tol", tol, "convergence tolerance on the log-likelihood")
        ->check(CLI::PositiveNumber);
    app->add_option("--init-box", init_box, "half-width of the random-start box")
        ->check(CLI::PositiveNumber);
    app->add_option("--separation-threshold", separation_threshold,
                    "|coefficient| flagged as separated")
        ->check(CLI::PositiveNumber);
  }

  FitConfig config() const {
    FitConfig c;
    c.n_starts = starts;
    c.seed = seed;
    c.max_iter = max_iter;
    c.tol = tol;
    c.init_box = init_box;
    c.separation_threshold = separation_threshold;
    return c;
  }

  void echo(ordered_json& j) const {
    j["starts"] = starts;
    j["seed"] = seed;
    j["max-iter"] = max_iter;
    j["tol"] = tol;
    j["init-box"] = init_box;
    j["separation-threshold"] = separation_threshold;
  }
};

SimulationConfig resolve_design(const std::string& setting,
                                const ordered_json& file_config) {
  return apply_design(file_config, builtin_setting(parse_setting(setting)));
}

// Dynamic-model data carry the time polynomial as extra covariates; the
// comparators evaluate it on the fly.
PanelDataset model_data(const PanelDataset& data, ModelKind model, int degree) {
  return model == ModelKind::dynamic ? append_time_polynomial(data, degree) : data;
}

void check_estimate_matches(const StoredEstimate& e, const PanelDataset& data) {
  if (e.d != data.fixed_dim() || e.q != data.varying_dim())
    throw DimensionError("estimates are for d = " + std::to_string(e.d) +
                         ", q = " + std::to_string(e.q) + " but the data have d = " +
                         std::to_string(data.fixed_dim()) + ", q = " +
                         std::to_string(data.varying_dim()));
}

double loglik_and_gradient(ModelKind model, const Vector& theta,
                           const PanelDataset& data, int degree, Vector& grad) {
  const auto d = data.fixed_dim();
  switch (model) {
    case ModelKind::dynamic:
      return DynamicObjective(data)(theta, grad);
    case ModelKind::static_model:
      return static_log_likelihood(
          StaticParams::unflatten(theta, d, data.varying_dim(), degree), data,
          &grad);
    case ModelKind::no_stayer:
      return no_stayer_log_likelihood(
          NoStayerParams::unflatten(theta, d, data.varying_dim(), degree), data,
          &grad);
  }
  return 0.0;
}

InferenceReport hessian_for(ModelKind model, const Vector& theta,
                            const PanelDataset& data, int degree, double step) {
  Vector grad;
  return hessian_se(
      [&](const Vector& v) {
        return loglik_and_gradient(model, v, data, degree, grad);
      },
      theta, step);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
  std::string setting = "s1";
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::string config_path;

  void add(CLI::App* app) {
    app->add_option("--setting", setting, "built-in design: s1, s2 or s3");
    app->add_option("--config", config_path,
                    "JSON file with flag values and design overrides");
    app->add_option("--n", n, "number of subjects")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "random seed");
    app->add_option("--out", out, "output directory");
  }

  int run(const ordered_json& file_config) const {
    auto design = resolve_design(setting, file_config);
    design.n = n;
    design.seed = seed;
    design.validate();
    ordered_json config = {{"setting", setting}};
    config.update(simulation_json(design));

    const auto sim = simulate_dataset(design);
    make_dir(out);
    const auto pre = preamble(config);
    {
      auto f = open_output(fs::path(out) / "data.csv");
      write_panel_csv(f, sim.data, pre);
    }
    {
      auto f = open_output(fs::path(out) / "latent.csv");
      write_latent_csv(f, sim.data, sim.truth, pre);
    }
    {
      auto f = open_output(fs::path(out) / "occupancy.csv");
      write_occupancy_csv(f, occupancy_table(sim.truth, sim.data), pre);
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------
// fit

struct FitCmd {
  std::string data_path;
  std::string model = "dynamic";
  std::string method = "direct";
  int degree = 0;
  std::string init_setting;
  std::string init_path;
  bool hessian = false;
  double hessian_step = 1e-4;
  std::string out = "estimates.json";
  std::string config_path;
  FitFlags fit;

  void add(CLI::App* app) {
    app->add_option("--data", data_path, "panel CSV")->required();
    app->add_option("--model", model, "dynamic, static or nostayer");
    app->add_option("--method", method, "direct or em (dynamic model only)");
    app->add_option("--degree", degree, "degree of the time polynomial, 0-3")
        ->check(CLI::Range(0, 3));
    app->add_option("--init-setting", init_setting,
                    "start from the true parameters of s1, s2 or s3");
    app->add_option("--init", init_path, "start from an estimates file");
    app->add_flag("--hessian", hessian, "add Hessian standard errors");
    app->add_option("--hessian-step", hessian_step,
                    "relative finite-difference step")
        ->check(CLI::PositiveNumber);
    app->add_option("--out", out, "output JSON");
    app->add_option("--config", config_path, "JSON file with flag values");
    fit.add(app);
  }

  int run() const {
    const auto kind = parse_model(model);
    if (method != "direct" && method != "em")
      throw UsageError("--method must be direct or em");
    if (method == "em" && kind != ModelKind::dynamic)
      throw UsageError("--method em is only available for the dynamic model");
    if (!init_setting.empty() && !init_path.empty())
      throw UsageError("--init-setting and --init are mutually exclusive");

    const auto raw = read_panel_csv(data_path);
    const auto data = model_data(raw, kind, degree);
    const auto d = raw.fixed_dim();
    const auto q = raw.varying_dim();
    StoredEstimate shape{kind, d, q, degree, {}};

    FitConfig fc = fit.config();
    if (!init_setting.empty()) {
      if (kind != ModelKind::dynamic || degree != 0)
        throw UsageError("--init-setting needs --model dynamic and --degree 0");
      const auto truth =
          builtin_setting(parse_setting(init_setting)).true_params;
      if (truth.fixed_dim() != d || truth.varying_dim() != q)
        throw DimensionError("setting " + init_setting +
                             " does not match the covariates of the data");
      fc.initial = truth.flatten();
    } else if (!init_path.empty()) {
      const auto e = read_estimate(init_path);
      if (e.model != kind || e.degree != degree)
        throw UsageError("--init file holds a different model or degree");
      check_estimate_matches(e, raw);
      fc.initial = e.theta;
    }

    ordered_json config;
    config["data"] = data_path;
    config["model"] = to_string(kind);
    config["method"] = method;
    config["degree"] = degree;
    config["init-setting"] = init_setting;
    config["init"] = init_path;
    config["hessian"] = hessian;
    config["hessian-step"] = hessian_step;
    fit.echo(config);

    Vector theta;
    ordered_json j = envelope("fit", config);
    auto record = [&](const auto& res) {
      theta = res.theta_hat.flatten();
      j["model"] = to_string(kind);
      j["method"] = method;
      j["d"] = d;
      j["q"] = q;
      j["degree"] = degree;
      j["theta_order"] = shape.names();
      j["theta"] = to_json(theta);
      j["loglik"] = res.loglik;
      j["aic"] = res.aic();
      j["n_parameters"] = res.n_parameters;
      j["converged"] = res.converged;
      j["status"] = res.status;
      j["iterations"] = res.iterations;
      j["n_evaluations"] = res.n_evaluations;
      j["start_index"] = res.start_index;
      j["start_logliks"] = res.start_logliks;
      j["separation_flags"] = res.separation_flags;
      j["separated"] = res.any_separation();
      if (method == "em") {
        j["em_iterations"] = res.trace.size();
        j["gem_violations"] = res.gem_violations;
      }
    };
    switch (kind) {
      case ModelKind::dynamic:
        record(method == "em" ? fit_em(data, fc) : fit_direct(data, fc));
        break;
      case ModelKind::static_model:
        record(fit_static(data, degree, fc));
        break;
      case ModelKind::no_stayer:
        record(fit_no_stayer(data, degree, fc));
        break;
    }
    Vector grad;
    loglik_and_gradient(kind, theta, data, degree, grad);
    j["gradient_max_norm"] = grad.cwiseAbs().maxCoeff();

    std::optional<std::string> hessian_error;
    if (hessian) {
      try {
        const auto r = hessian_for(kind, theta, data, degree, hessian_step);
        j["inference"] = inference_json(r, shape.names());
      } catch (const HessianError& e) {
        hessian_error = e.what();
        j["inference"] = {{"method", "HESSIAN"},
                          {"error", e.what()},
                          {"min_eigenvalue", e.eigenvalue()}};
      }
    }
    write_json_file(out, j);
    if (!j["converged"].get<bool>())
      std::cerr << "warning: fit did not converge (" << j["status"].get<std::string>()
                << ")\n";
    if (hessian_error) throw HessianError(*hessian_error, std::nan(""), -1);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// predict

struct PredictCmd {
  std::string data_path;
  std::string params_path;
  std::string times = "0..5";
  std::string out = "predictions.csv";
  std::string config_path;

  void add(CLI::App* app) {
    app->add_option("--data", data_path, "panel CSV")->required();
    app->add_option("--params", params_path, "estimates JSON")->required();
    app->add_option("--times", times, "a single time T or a range a..b");
    app->add_option("--out", out, "output CSV");
    app->add_option("--config", config_path, "JSON file with flag values");
  }

  std::pair<int, int> time_range() const {
    const auto dots = times.find("..");
    auto to_int = [&](const std::string& s) {
      long long v = 0;
      if (!parse_int(s, v) || v < 0 || v > 100000)
        throw UsageError("--times: '" + times + "' is not T or a..b");
      return static_cast<int>(v);
    };
    if (dots == std::string::npos) {
      const int t = to_int(times);
      return {t, t};
    }
    const int a = to_int(times.substr(0, dots));
    const int b = to_int(times.substr(dots + 2));
    if (a > b) throw UsageError("--times: empty range '" + times + "'");
    return {a, b};
  }

  int run() const {
    const auto [t_lo, t_hi] = time_range();
    const auto raw = read_panel_csv(data_path);
    const auto est = read_estimate(params_path);
    check_estimate_matches(est, raw);
    const auto data = model_data(raw, est.model, est.degree);
    const auto d = est.d;
    const auto q = est.q;

    ordered_json config;
    config["data"] = data_path;
    config["params"] = params_path;
    config["times"] = times;
    config["model"] = to_string(est.model);
    config["degree"] = est.degree;

    auto f = open_output(out);
    write_preamble(f, preamble(config));
    f << "id,t,p_stayer,p_mover\n";
    for (const auto& s : data.subjects()) {
      // P(S_t) uses covariates up to t-1, so t can run to y+1.
      const int t_max = std::min(t_hi, s.y + 1);
      if (t_max < t_lo) continue;
      std::vector<CumulativeProbs> path;
      switch (est.model) {
        case ModelKind::dynamic:
          path = cumulative_state_path(
              ModelParams::unflatten(est.theta, d, q + est.degree), s.x, s.z,
              t_max);
          break;
        case ModelKind::static_model:
          path = static_cumulative_path(
              StaticParams::unflatten(est.theta, d, q, est.degree), s.x, s.z,
              t_max);
          break;
        case ModelKind::no_stayer:
          path = no_stayer_cumulative_path(
              NoStayerParams::unflatten(est.theta, d, q, est.degree), s.x, s.z,
              t_max);
          break;
      }
      for (int t = t_lo; t <= t_max; ++t) {
        const auto& p = path[static_cast<std::size_t>(t)];
        f << s.id << ',' << t << ',' << format_double(p.stayer) << ','
          << format_double(p.mover) << '\n';
      }
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------
// bootstrap

struct BootstrapCmd {
  std::string data_path;
  std::string params_path;
  std::string method = "bootstrap";
  int nboot = 200;
  unsigned threads = 0;
  bool exclude_separated = false;
  double hessian_step = 1e-4;
  std::string out = "inference.json";
  std::string config_path;
  FitFlags fit;

  void add(CLI::App* app) {
    app->add_option("--data", data_path, "panel CSV")->required();
    app->add_option("--params", params_path, "estimates JSON")->required();
    app->add_option("--method", method, "bootstrap or hessian");
    app->add_option("--nboot", nboot, "bootstrap resamples")
        ->check(CLI::Range(2, 1000000));
    app->add_option("--threads", threads, "worker threads (0: all cores)");
    app->add_flag("--exclude-separated", exclude_separated,
                  "drop resamples whose fit is separated");
    app->add_option("--hessian-step", hessian_step,
                    "relative finite-difference step")
        ->check(CLI::PositiveNumber);
    app->add_option("--out", out, "output JSON");
    app->add_option("--config", config_path, "JSON file with flag values");
    fit.add(app);
  }

  int run() const {
    if (method != "bootstrap" && method != "hessian")
      throw UsageError("--method must be bootstrap or hessian");
    const auto raw = read_panel_csv(data_path);
    const auto est = read_estimate(params_path);
    check_estimate_matches(est, raw);
    const auto data = model_data(raw, est.model, est.degree);
    const auto d = est.d;
    const auto q = est.q;

    ordered_json config;
    config["data"] = data_path;
    config["params"] = params_path;
    config["method"] = method;
    config["model"] = to_string(est.model);
    config["degree"] = est.degree;
    if (method == "bootstrap") {
      config["nboot"] = nboot;
      config["exclude-separated"] = exclude_separated;
      fit.echo(config);
    } else {
      config["hessian-step"] = hessian_step;
    }

    InferenceReport report;
    if (method == "hessian") {
      report = hessian_for(est.model, est.theta, data, est.degree, hessian_step);
    } else {
      BootstrapOptions opts;
      opts.fit = fit.config();
      opts.exclude_separated = exclude_separated;
      opts.threads = threads;
      const auto seed = fit.seed;
      auto refit = [&](const PanelDataset& sample, int rep) {
        FitConfig cfg = opts.fit;
        cfg.initial = est.theta;
        cfg.seed = derive_seed(seed, StreamPurpose::start,
                               static_cast<std::uint64_t>(rep));
        auto finish = [](const auto& res) {
          if (!res.converged)
            throw FitError("bootstrap fit did not converge: " + res.status);
          return std::pair{res.theta_hat.flatten(), res.any_separation()};
        };
        switch (est.model) {
          case ModelKind::static_model:
            return finish(fit_static(sample, est.degree, cfg));
          case ModelKind::no_stayer:
            return finish(fit_no_stayer(sample, est.degree, cfg));
          default:
            return finish(fit_direct(sample, cfg));
        }
      };
      report = bootstrap_replicates(data, est.theta, nboot, seed, refit, opts)
                   .report;
    }
    ordered_json j = envelope("bootstrap", config);
    j["model"] = to_string(est.model);
    j["d"] = d;
    j["q"] = q;
    j["degree"] = est.degree;
    j.update(inference_json(report, est.names()));
    write_json_file(out, j);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// study

struct StudyCmd {
  std::string setting = "s1";
  int nreps = 100;
  std::optional<std::size_t> n;
  std::string models = "dynamic,static,nostayer";
  std::uint64_t seed = 1;
  std::string out = "study";
  unsigned threads = 0;
  int degree = 0;
  int starts = 3;
  double extreme_threshold = 6.0;
  bool coverage = false;
  double hessian_step = 1e-4;
  int max_iter = 1000;
  double tol = 1e-8;
  std::string config_path;

  void add(CLI::App* app) {
    app->add_option("--setting", setting, "built-in design: s1, s2 or s3");
    app->add_option("--config", config_path,
                    "JSON file with flag values and design overrides");
    app->add_option("--nreps", nreps, "replications")->check(CLI::Range(2, 100000));
    app->add_option("--n", n, "subjects per replication")->check(CLI::PositiveNumber);
    app->add_option("--models", models, "comma-separated list of models");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--out", out, "output directory");
    app->add_option("--threads", threads, "worker threads (0: all cores)");
    app->add_option("--degree", degree, "time polynomial of the comparators")
        ->check(CLI::Range(0, 3));
    app->add_option("--starts", starts, "random starts for the comparators")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--extreme-threshold", extreme_threshold,
                    "|estimate| counted as extreme")
        ->check(CLI::PositiveNumber);
    app->add_flag("--coverage", coverage,
                  "also run the Hessian / warp-speed coverage study");
    app->add_option("--hessian-step", hessian_step,
                    "relative finite-difference step")
        ->check(CLI::PositiveNumber);
    app->add_option("--max-iter", max_iter, "iteration limit per fit")
        ->check(CLI::PositiveNumber);
    app->add_option("--tol", tol, "convergence tolerance per fit")
        ->check(CLI::PositiveNumber);
  }

  int run(const ordered_json& file_config) const {
    auto design = resolve_design(setting, file_config);
    if (n) design.n = *n;
    design.validate();

    StudyOptions opts;
    opts.models.clear();
    for (const auto& m : split(models, ',')) opts.models.push_back(parse_model(m));
    if (opts.models.empty()) throw UsageError("--models is empty");
    opts.fit.max_iter = max_iter;
    opts.fit.tol = tol;
    opts.comparator_starts = starts;
    opts.comparator_degree = degree;
    opts.extreme_threshold = extreme_threshold;
    opts.threads = threads;

    ordered_json config;
    config["setting"] = setting;
    config["nreps"] = nreps;
    config["models"] = models;
    config["seed"] = seed;
    config["degree"] = degree;
    config["starts"] = starts;
    config["extreme-threshold"] = extreme_threshold;
    config["coverage"] = coverage;
    config["hessian-step"] = hessian_step;
    config["max-iter"] = max_iter;
    config["tol"] = tol;
    config["design"] = simulation_json(design);
    config["design"].erase("seed");

    const auto report = run_replication_study(design, nreps, seed, opts);
    std::optional<CoverageTable> cov;
    if (coverage) {
      CoverageOptions co;
      co.fit = opts.fit;
      co.hessian_step = hessian_step;
      co.threads = threads;
      cov = warp_speed_coverage(design, nreps, seed, co);
    }

    make_dir(out);
    const auto pre = preamble(config);
    const auto dir = fs::path(out);
    const Vector truth = design.true_params.flatten();
    const auto d = design.true_params.fixed_dim();
    const auto q = design.true_params.varying_dim();

    auto names_for = [&](ModelKind m) {
      return StoredEstimate{m, d, q, m == ModelKind::dynamic ? 0 : degree, {}}
          .names();
    };

    {
      auto f = open_output(dir / "runs.csv");
      write_preamble(f, pre);
      f << "replication,model,ok,converged,separated,loglik,error\n";
      for (std::size_t r = 0; r < report.replications.size(); ++r)
        for (std::size_t k = 0; k < report.models.size(); ++k) {
          const auto& run = report.replications[r].runs[k];
          std::string err = run.error;
          for (auto& c : err)
            if (c == ',' || c == '\n') c = ';';
          f << r << ',' << to_string(report.models[k]) << ',' << run.ok << ','
            << run.converged << ',' << run.separated << ','
            << (run.ok ? format_double(run.loglik) : "") << ',' << err << '\n';
        }
    }
    {
      auto f = open_output(dir / "estimates.csv");
      write_preamble(f, pre);
      f << "replication,model,parameter,estimate,centered\n";
      for (std::size_t r = 0; r < report.replications.size(); ++r)
        for (std::size_t k = 0; k < report.models.size(); ++k) {
          const auto& run = report.replications[r].runs[k];
          if (!run.ok) continue;
          const auto m = report.models[k];
          const auto names = names_for(m);
          for (Eigen::Index j = 0; j < run.estimate.size(); ++j) {
            f << r << ',' << to_string(m) << ','
              << names[static_cast<std::size_t>(j)] << ','
              << format_double(run.estimate[j]) << ',';
            if (m == ModelKind::dynamic)
              f << format_double(run.estimate[j] - truth[j]);
            f << '\n';
          }
        }
    }
    {
      auto f = open_output(dir / "mad.csv");
      write_preamble(f, pre);
      f << "replication,model,state,t,mad\n";
      for (std::size_t r = 0; r < report.replications.size(); ++r)
        for (std::size_t k = 0; k < report.models.size(); ++k) {
          const auto& run = report.replications[r].runs[k];
          if (!run.ok) continue;
          for (std::size_t t = 0; t < run.mad_stayer.size(); ++t) {
            f << r << ',' << to_string(report.models[k]) << ",stayer," << t
              << ',' << format_double(run.mad_stayer[t]) << '\n';
            f << r << ',' << to_string(report.models[k]) << ",mover," << t
              << ',' << format_double(run.mad_mover[t]) << '\n';
          }
        }
    }
    {
      auto f = open_output(dir / "summary.csv");
      write_preamble(f, pre);
      f << "model,state,t,median_mad,mean_mad,n_used\n";
      for (const auto m : report.models)
        for (const auto s : {StateKind::stayer, StateKind::mover})
          for (int t = 0; t <= design.k_max; ++t) {
            const auto v = report.mad_values(m, s, t);
            double mean = 0.0;
            for (double x : v) mean += x;
            mean = v.empty() ? std::nan("") : mean / static_cast<double>(v.size());
            f << to_string(m) << ','
              << (s == StateKind::stayer ? "stayer" : "mover") << ',' << t << ','
              << format_double(StudyReport::median(v)) << ','
              << format_double(mean) << ',' << v.size() << '\n';
          }
    }
    {
      auto f = open_output(dir / "occupancy.csv");
      write_occupancy_csv(f, report.occupancy, pre);
    }
    if (cov) {
      auto f = open_output(dir / "coverage.csv");
      write_preamble(f, pre);
      f << "parameter,truth,m1_coverage,m1_length,m1_sd,m2_coverage,m2_length,"
           "m2_sd,deviation_sd,deviation_coverage,empirical_sd\n";
      for (const auto& r : cov->rows)
        f << r.name << ',' << format_double(r.truth) << ','
          << format_double(r.m1_coverage) << ',' << format_double(r.m1_length)
          << ',' << format_double(r.m1_sd) << ',' << format_double(r.m2_coverage)
          << ',' << format_double(r.m2_length) << ',' << format_double(r.m2_sd)
          << ',' << format_double(r.deviation_sd) << ','
          << format_double(r.deviation_coverage) << ','
          << format_double(r.empirical_sd) << '\n';
    }

    ordered_json j = envelope("study", config);
    j["n_reps"] = nreps;
    auto& per_model = j["models"] = ordered_json::array();
    for (std::size_t k = 0; k < report.models.size(); ++k) {
      int nonconv = 0, separated = 0;
      for (const auto& r : report.replications) {
        const auto& run = r.runs[k];
        nonconv += run.ok && !run.converged;
        separated += run.ok && run.separated;
      }
      per_model.push_back({{"model", to_string(report.models[k])},
                           {"n_failed", report.n_failed(report.models[k])},
                           {"n_nonconverged", nonconv},
                           {"n_separated", separated}});
    }
    if (std::find(report.models.begin(), report.models.end(),
                  ModelKind::dynamic) != report.models.end()) {
      j["extreme_fraction"] = report.extreme_fraction();
      const auto est = report.dynamic_estimates();
      const auto names = names_for(ModelKind::dynamic);
      auto& rows = j["dynamic_estimates"] = ordered_json::array();
      if (est.size() >= 2) {
        const Vector sd = sample_sd(est);
        for (Eigen::Index p = 0; p < truth.size(); ++p) {
          double mean = 0.0;
          for (const auto& e : est) mean += e[p];
          mean /= static_cast<double>(est.size());
          rows.push_back(
              {{"parameter", names[static_cast<std::size_t>(p)]},
               {"truth", truth[p]},
               {"mean", mean},
               {"bias", mean - truth[p]},
               {"mc_se", sd[p] / std::sqrt(static_cast<double>(est.size()))},
               {"sd", sd[p]}});
        }
      }
    }
    if (cov)
      j["coverage"] = {{"n_reps", cov->n_reps},
                       {"n_used", cov->n_used},
                       {"n_failed", cov->n_failed},
                       {"n_hessian", cov->n_hessian},
                       {"n_separated", cov->n_separated}};
    write_json_file((dir / "study.json").string(), j);
    return 0;
  }
};

// ---------------------------------------------------------------------------

std::string data_code(DataError::Code c) {
  using C = DataError::Code;
  switch (c) {
    case C::invalid_subject: return "invalid_subject";
    case C::bad_header: return "bad_header";
    case C::ragged_row: return "ragged_row";
    case C::bad_number: return "bad_number";
    case C::non_binary_delta: return "non_binary_delta";
    case C::inconsistent_subject: return "inconsistent_subject";
    case C::inconsistent_fixed_covariates: return "inconsistent_fixed_covariates";
    case C::missing_time: return "missing_time";
    case C::empty_dataset: return "empty_dataset";
    case C::io: return "io";
  }
  return "unknown";
}

int fail(int code, ordered_json error) {
  std::cerr << ordered_json{{"error", std::move(error)}}.dump() << '\n';
  return code;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);

  CLI::App app{"Dynamic mover-stayer models for discrete-time panel data",
               "moverstayer"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", version_line());
  app.require_subcommand(1);

  SimulateCmd simulate;
  FitCmd fit;
  PredictCmd predict;
  BootstrapCmd bootstrap;
  StudyCmd study;
  auto* sim_app = app.add_subcommand("simulate", "simulate a panel dataset");
  simulate.add(sim_app);
  auto* fit_app = app.add_subcommand("fit", "fit a model to a panel CSV");
  fit.add(fit_app);
  auto* pred_app = app.add_subcommand(
      "predict", "cumulative stayer and mover probabilities per subject");
  predict.add(pred_app);
  auto* boot_app = app.add_subcommand(
      "bootstrap", "bootstrap or Hessian standard errors and 95% intervals");
  bootstrap.add(boot_app);
  auto* study_app =
      app.add_subcommand("study", "Monte Carlo replication study");
  study.add(study_app);

  // Splice config-file values in right after the subcommand name.
  ordered_json file_config = ordered_json::object();
  if (const auto path = find_config_path(args)) {
    file_config = read_json_file(*path);
    if (!file_config.is_object())
      throw UsageError("config file must hold a JSON object");
    const auto sub = std::find_if(args.begin(), args.end(), [](const auto& a) {
      return !a.empty() && a[0] != '-';
    });
    if (sub != args.end()) {
      const auto tokens = config_tokens(file_config);
      args.insert(sub + 1, tokens.begin(), tokens.end());
    }
  }
  std::vector<char*> cargv{argv[0]};
  for (auto& a : args) cargv.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, {{"kind", "usage"}, {"message", e.what()}});
  }

  if (sim_app->parsed()) return simulate.run(file_config);
  if (fit_app->parsed()) return fit.run();
  if (pred_app->parsed()) return predict.run();
  if (boot_app->parsed()) return bootstrap.run();
  return study.run(file_config);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    return fail(kExitUsage, {{"kind", "usage"}, {"message", e.what()}});
  } catch (const std::invalid_argument& e) {
    return fail(kExitUsage, {{"kind", "usage"}, {"message", e.what()}});
  } catch (const DataError& e) {
    ordered_json j{{"kind", "data"}, {"code", data_code(e.code())},
                   {"message", e.what()}};
    if (e.row() > 0) j["row"] = e.row();
    if (!e.subject().empty()) j["subject"] = e.subject();
    return fail(kExitData, j);
  } catch (const DimensionError& e) {
    return fail(kExitData, {{"kind", "dimension"}, {"message", e.what()}});
  } catch (const HessianError& e) {
    ordered_json j{{"kind", "hessian"}, {"message", e.what()}};
    if (std::isfinite(e.eigenvalue())) j["min_eigenvalue"] = e.eigenvalue();
    return fail(kExitNumerical, j);
  } catch (const Error& e) {
    return fail(kExitNumerical, {{"kind", e.kind()}, {"message", e.what()}});
  } catch (const std::exception& e) {
    return fail(kExitNumerical, {{"kind", "internal"}, {"message", e.what()}});
  }
}
