#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace moverstayer;
using mstest::vec;

namespace {

PanelDataset setting1_sample(std::size_t n, std::uint64_t seed) {
  auto cfg = builtin_setting(Setting::s1);
  cfg.n = n;
  cfg.seed = seed;
  return simulate_dataset(cfg).data;
}

Subject make_subject(std::string id, int y, int delta, Vector x, RowMatrix z) {
  Subject s;
  s.id = std::move(id);
  s.y = y;
  s.delta = delta;
  s.x = std::move(x);
  s.z = std::move(z);
  return s;
}

}  // namespace

TEST(EStep, ObservedMoverIsAtRisk) {
  RowMatrix z(3, 2);
  z << 0, 1, 1, 2, 2, 3;
  const auto e = e_step(mstest::setting1_params(),
                        make_subject("a", 2, 1, vec({0.1, 1}), z));
  EXPECT_EQ(e.w, 1.0);
  ASSERT_EQ(e.q.size(), 4);
  EXPECT_EQ(e.q.cwiseAbs().maxCoeff(), 0.0);
}

TEST(EStep, CertainRiskGivesUnitMass) {
  auto p = mstest::setting1_params();
  p.alpha << 800, 0, 0;
  RowMatrix z(3, 2);
  z << 0, 1, 1, 2, 2, 3;
  const auto e = e_step(p, make_subject("a", 2, 0, vec({0.1, 1}), z));
  EXPECT_NEAR(e.w, 1.0, 1e-15);
  EXPECT_NEAR(e.q.sum(), 1.0, 1e-12);
}

TEST(EStep, PosteriorMatchesPathEnumeration) {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 500; ++rep) {
    const auto p = mstest::random_params(rng, 2, 2);
    auto s = mstest::random_subject(rng, 2, 2, 10);
    s.delta = 0;
    const auto e = e_step(p, s);
    const auto paths = latent_path_weights(p, s);
    double total = 0.0;
    for (const auto& [path, w] : paths) total += w;
    double stayer0 = 0.0;
    for (const auto& [path, w] : paths) {
      const double post = w / total;
      if (path.b == 0) {
        stayer0 = post;
      } else if (path.r == kNever) {
        EXPECT_NEAR(e.q[s.y + 1], post, 1e-10);
      } else {
        EXPECT_NEAR(e.q[path.r], post, 1e-10);
      }
    }
    EXPECT_NEAR(e.w, e.q.sum(), 1e-12);
    EXPECT_NEAR((1.0 - e.w) + e.q.sum(), 1.0, 1e-12);
    EXPECT_NEAR(1.0 - e.w, stayer0, 1e-10);
  }
}

TEST(ExtendedData, HandEnumeration) {
  // Mover with y = 1 and censored subject with y = 1.
  RowMatrix z(2, 1);
  z << 0.5, 1.5;
  const PanelDataset data({make_subject("m", 1, 1, vec({1}), z),
                           make_subject("c", 1, 0, vec({0}), z)},
                          1, 1);
  std::vector<EStep> w(2);
  w[0].w = 1.0;
  w[0].q = Vector::Zero(3);
  w[1].w = 0.7;
  w[1].q = vec({0.1, 0.2, 0.4});  // q(0), q(1), q(inf)
  const auto rows = build_extended_data(data, w);
  ASSERT_EQ(rows.size(), 2u + 4u);
  // mover: (t=0, 1->1, 1), (t=1, 1->3, 1)
  EXPECT_EQ(rows[0].subject, 0u);
  EXPECT_EQ(rows[0].t, 0);
  EXPECT_EQ(rows[0].category, 1);
  EXPECT_EQ(rows[0].weight, 1.0);
  EXPECT_EQ(rows[1].t, 1);
  EXPECT_EQ(rows[1].category, 3);
  EXPECT_EQ(rows[1].weight, 1.0);
  // censored: t=0 stay 0.4+0.2, move-to-2 0.1; t=1 stay 0.4, move-to-2 0.2
  EXPECT_EQ(rows[2].t, 0);
  EXPECT_EQ(rows[2].category, 1);
  EXPECT_NEAR(rows[2].weight, 0.6, 1e-15);
  EXPECT_EQ(rows[3].category, 2);
  EXPECT_NEAR(rows[3].weight, 0.1, 1e-15);
  EXPECT_EQ(rows[4].t, 1);
  EXPECT_NEAR(rows[4].weight, 0.4, 1e-15);
  EXPECT_EQ(rows[5].category, 2);
  EXPECT_NEAR(rows[5].weight, 0.2, 1e-15);
}

TEST(MStep, DoesNotDecreaseQ) {
  const auto data = setting1_sample(3000, 5);
  const auto p = mstest::setting1_params();
  std::vector<EStep> w;
  e_step_all(p, data, w);
  const double before = q_function(p, data, w);
  const auto ms = m_step(data, w, p);
  EXPECT_GE(q_function(ms.params, data, w), before);
  EXPECT_LE(ms.alpha_gradient, 1e-8);
  EXPECT_LE(ms.multinomial_gradient, 1e-8);
  EXPECT_FALSE(ms.separated());
}

TEST(MStep, AllAtRiskWeightsTripSeparationGuard) {
  const auto data = setting1_sample(200, 6);
  std::vector<EStep> w(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    w[i].w = 1.0;
    w[i].q = Vector::Zero(data[i].y + 2);
    if (data[i].delta == 0) w[i].q[data[i].y + 1] = 1.0;
  }
  const auto ms = m_step(data, w, ModelParams::zeros(2, 2));
  EXPECT_TRUE(ms.separation_flags[0]);  // alpha intercept diverges
  EXPECT_GT(ms.params.alpha[0], 15.0);
}

TEST(FitDirect, RecoversStationaryPointFromTruth) {
  const auto data = setting1_sample(10000, 21);
  FitConfig cfg;
  cfg.initial = mstest::setting1_params().flatten();
  const auto fit = fit_direct(data, cfg);
  EXPECT_TRUE(fit.converged) << fit.status;
  EXPECT_FALSE(fit.any_separation());
  EXPECT_GE(fit.loglik, total_log_likelihood(mstest::setting1_params(), data));
  const Vector g = gradient(fit.theta_hat, data);
  EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_EQ(fit.n_parameters, 13);
  EXPECT_NEAR(fit.aic(), 26.0 - 2.0 * fit.loglik, 1e-9);
}

TEST(FitDirect, BestOfMultiStartAndDeterministic) {
  const auto data = setting1_sample(800, 3);
  FitConfig cfg;
  cfg.n_starts = 4;
  cfg.seed = 17;
  const auto a = fit_direct(data, cfg);
  const auto b = fit_direct(data, cfg);
  // zero start plus n_starts random starts
  ASSERT_EQ(a.start_logliks.size(), 5u);
  for (double v : a.start_logliks) EXPECT_LE(v, a.loglik);
  EXPECT_EQ(a.loglik, a.start_logliks[static_cast<std::size_t>(a.start_index)]);
  EXPECT_EQ(a.theta_hat.flatten(), b.theta_hat.flatten());
}

TEST(FitDirect, FlagsSeparationOnPerfectPredictor) {
  // Keep only observed moves among subjects with x_2 = 1: the binary
  // covariate then predicts observed moves perfectly.
  auto cfg = builtin_setting(Setting::s1);
  cfg.n = 4000;
  cfg.seed = 41;
  const auto full = simulate_dataset(cfg).data;
  std::vector<Subject> kept;
  for (const auto& s : full.subjects())
    if (!(s.x[1] == 0.0 && s.delta == 1)) kept.push_back(s);
  const PanelDataset data(std::move(kept), 2, 2);
  FitConfig fc;
  fc.initial = cfg.true_params.flatten();
  const auto fit = fit_direct(data, fc);
  EXPECT_TRUE(fit.separation_flags[8]) << fit.theta_hat.beta13.transpose();
}

TEST(FitDirect, FailsWhenNoStartIsFinite) {
  auto data = setting1_sample(50, 2);
  FitConfig cfg;
  Vector bad = Vector::Constant(13, std::nan(""));
  cfg.initial = bad;
  EXPECT_THROW(fit_direct(data, cfg), FitError);
}

TEST(FitEM, AgreesWithDirectAndIsMonotone) {
  const auto data = setting1_sample(2000, 13);
  FitConfig cfg;
  cfg.initial = mstest::setting1_params().flatten();
  const auto direct = fit_direct(data, cfg);
  const auto em = fit_em(data, cfg);
  ASSERT_TRUE(direct.converged);
  ASSERT_TRUE(em.converged) << em.status;
  EXPECT_NEAR(em.loglik, direct.loglik, 1e-3);
  EXPECT_EQ(em.gem_violations, 0);
  for (std::size_t k = 1; k < em.trace.size(); ++k)
    EXPECT_GE(em.trace[k], em.trace[k - 1] - 1e-8);
}

TEST(FitEM, FixedPointAtDirectOptimum) {
  const auto data = setting1_sample(2000, 14);
  FitConfig cfg;
  cfg.initial = mstest::setting1_params().flatten();
  cfg.tol = 1e-10;
  const auto direct = fit_direct(data, cfg);
  FitConfig em_cfg;
  em_cfg.initial = direct.theta_hat.flatten();
  const auto em = fit_em(data, em_cfg);
  EXPECT_TRUE(em.converged);
  EXPECT_LE(em.iterations, 2);
  EXPECT_LT(std::abs(em.trace.back() - em.trace[em.trace.size() - 2]), em_cfg.tol);
}

TEST(HessianSE, QuadraticHasAnalyticStandardErrors) {
  Matrix a(3, 3);
  a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const Vector center = vec({0.3, -1, 2});
  auto f = [&](const Vector& v) {
    const Vector d = v - center;
    return -0.5 * d.dot(a * d);
  };
  const auto rep = hessian_se(f, center);
  const Matrix cov = a.inverse();
  for (Eigen::Index j = 0; j < 3; ++j)
    EXPECT_NEAR(rep.se[j], std::sqrt(cov(j, j)), 1e-6);
  EXPECT_EQ(rep.method, InferenceMethod::hessian);
  EXPECT_NEAR(rep.ci_upper[1] - rep.ci_lower[1], 2 * 1.96 * rep.se[1], 1e-12);
}

TEST(HessianSE, IndefiniteCurvatureIsReported) {
  auto f = [](const Vector& v) { return -v[0] * v[0] + v[1] * v[1]; };
  try {
    hessian_se(f, vec({0, 0}));
    FAIL() << "expected HessianError";
  } catch (const HessianError& e) {
    EXPECT_LT(e.eigenvalue(), 0.0);
    EXPECT_NE(std::string(e.what()).find("eigenvalue"), std::string::npos);
  }
}

TEST(HessianSE, PositiveAtLargeSampleEstimate) {
  const auto data = setting1_sample(5000, 23);
  FitConfig cfg;
  cfg.initial = mstest::setting1_params().flatten();
  const auto fit = fit_direct(data, cfg);
  const auto rep = hessian_se(fit.theta_hat, data);
  EXPECT_TRUE(rep.se.allFinite());
  EXPECT_GT(rep.se.minCoeff(), 0.0);
  EXPECT_EQ(rep.n_boot, 0);
}

TEST(Bootstrap, IdenticalResamplesGiveZeroSpread) {
  const auto data = setting1_sample(500, 30);
  FitConfig cfg;
  cfg.initial = mstest::setting1_params().flatten();
  const auto fit = fit_direct(data, cfg);
  BootstrapOptions opt;
  opt.resampler = [](int, std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  };
  const auto boot = bootstrap_se(data, fit.theta_hat, 2, 1, opt);
  EXPECT_EQ(boot.report.se.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(boot.report.n_boot, 2);
}

TEST(Bootstrap, DeterministicForSeed) {
  const auto data = setting1_sample(400, 31);
  FitConfig cfg;
  cfg.initial = mstest::setting1_params().flatten();
  const auto fit = fit_direct(data, cfg);
  BootstrapOptions opt;
  opt.threads = 3;
  const auto a = bootstrap_se(data, fit.theta_hat, 6, 5, opt);
  opt.threads = 1;
  const auto b = bootstrap_se(data, fit.theta_hat, 6, 5, opt);
  EXPECT_EQ(a.report.se, b.report.se);
  EXPECT_EQ(a.report.ci_lower, b.report.ci_lower);
  EXPECT_GT(a.report.se.minCoeff(), 0.0);
}

TEST(Bootstrap, TooManyFailuresIsAnError) {
  const auto data = setting1_sample(50, 32);
  const Vector theta = Vector::Zero(13);
  EXPECT_THROW(bootstrap_replicates(
                   data, theta, 4, 1,
                   [&](const PanelDataset&, int rep) -> std::pair<Vector, bool> {
                     if (rep < 3) throw FitError("stub");
                     return {theta, false};
                   },
                   BootstrapOptions{}),
               BootstrapError);
}

TEST(Coverage, ZeroNoiseReplicatesCoverEverything) {
  const Vector truth = vec({1, -2});
  std::vector<CoverageReplicate> reps(10);
  for (std::size_t i = 0; i < reps.size(); ++i) {
    reps[i].ok = true;
    reps[i].estimate = truth;
    const double jitter = (i % 2 ? 1e-3 : -1e-3);
    reps[i].bootstrap_estimate = truth + Vector::Constant(2, jitter);
    reps[i].hessian = Vector::Constant(2, 0.1);
  }
  reps[3].ok = false;
  const auto table = coverage_from_replicates(truth, reps, {"a", "b"});
  EXPECT_EQ(table.n_failed, 1);
  EXPECT_EQ(table.n_used, 9);
  for (const auto& row : table.rows) {
    EXPECT_EQ(row.m1_coverage, 1.0);
    EXPECT_EQ(row.m2_coverage, 1.0);
    EXPECT_NEAR(row.m1_length, 2 * 1.96 * 0.1, 1e-12);
  }
}

TEST(Coverage, WarpSpeedNeedsEnoughReplications) {
  EXPECT_THROW(warp_speed_coverage(builtin_setting(Setting::s1), 50, 1),
               std::invalid_argument);
}
