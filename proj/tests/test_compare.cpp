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

StaticParams random_static(std::mt19937_64& rng, int degree) {
  std::uniform_real_distribution<double> u(-1, 1);
  StaticParams p = StaticParams::zeros(2, 2, degree);
  for (auto* v : {&p.alpha, &p.beta, &p.gamma})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = u(rng);
  for (int k = 0; k < degree; ++k) p.gamma[2 + k] *= 0.3;
  return p;
}

}  // namespace

TEST(StaticLikelihood, CensoredAtZero) {
  StaticParams p{vec({0.4}), vec({-0.3}), vec({0.2}), 0};
  Subject s;
  s.id = "a";
  s.y = 0;
  s.delta = 0;
  s.x = Vector(0);
  s.z = RowMatrix::Constant(1, 1, 1.5);
  const double pi = 1 / (1 + std::exp(-0.4));
  const double hazard = 1 / (1 + std::exp(-(-0.3 + 0.2 * 1.5)));
  EXPECT_NEAR(static_log_likelihood(p, PanelDataset({s}, 0, 1)),
              std::log(1 - pi * hazard), 1e-14);
}

TEST(StaticLikelihood, MatchesTwoPathEnumeration) {
  std::mt19937_64 rng(4);
  const auto data = setting1_sample(200, 9);
  for (int degree : {0, 2}) {
    const auto p = random_static(rng, degree);
    double oracle = 0.0;
    for (const auto& s : data.subjects()) oracle += std::log(static_enumeration(p, s));
    EXPECT_NEAR(static_log_likelihood(p, data), oracle, 1e-9);
  }
}

TEST(NoStayerLikelihood, ImmediateMove) {
  NoStayerParams p{vec({-0.3}), vec({0.2}), 0};
  Subject s;
  s.id = "a";
  s.y = 0;
  s.delta = 1;
  s.x = Vector(0);
  s.z = RowMatrix::Constant(1, 1, 1.5);
  EXPECT_NEAR(no_stayer_log_likelihood(p, PanelDataset({s}, 0, 1)),
              std::log(1 / (1 + std::exp(-(-0.3 + 0.3)))), 1e-14);
}

TEST(Nesting, StaticWithCertainRiskMatchesNoStayer) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const auto data = setting1_sample(400, 50 + rep);
    // Hazards of the reference design, perturbed: survival stays far from 0,
    // so the leftover stayer mass exp(-30) is negligible.
    const auto truth = mstest::setting1_params();
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    StaticParams sp{vec({30, 0, 0}), truth.beta13, truth.gamma13, 0};
    for (Eigen::Index j = 0; j < 3; ++j) sp.beta[j] += u(rng);
    for (Eigen::Index j = 0; j < 2; ++j) sp.gamma[j] += u(rng);
    const NoStayerParams np{sp.beta, sp.gamma, 0};
    EXPECT_NEAR(static_log_likelihood(sp, data),
                no_stayer_log_likelihood(np, data), 1e-6);
  }
}

TEST(Gradient, ComparatorsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  const auto data = setting1_sample(300, 10);
  for (int degree : {0, 3}) {
    const auto sp = random_static(rng, degree);
    Vector g;
    static_log_likelihood(sp, data, &g);
    const Vector fd = central_difference_gradient(
        [&](const Vector& v) {
          return static_log_likelihood(
              StaticParams::unflatten(v, 2, 2, degree), data);
        },
        sp.flatten());
    for (Eigen::Index j = 0; j < g.size(); ++j)
      EXPECT_NEAR(g[j], fd[j], 1e-5 * std::max(1.0, std::abs(fd[j])));

    const NoStayerParams np{sp.beta, sp.gamma, degree};
    no_stayer_log_likelihood(np, data, &g);
    const Vector fd2 = central_difference_gradient(
        [&](const Vector& v) {
          return no_stayer_log_likelihood(
              NoStayerParams::unflatten(v, 2, 2, degree), data);
        },
        np.flatten());
    for (Eigen::Index j = 0; j < g.size(); ++j)
      EXPECT_NEAR(g[j], fd2[j], 1e-5 * std::max(1.0, std::abs(fd2[j])));
  }
}

TEST(FitStatic, ConvergesWithFiniteAic) {
  const auto data = setting1_sample(2000, 11);
  FitConfig cfg;
  cfg.n_starts = 2;
  for (int degree : {0, 3}) {
    const auto fit = fit_static(data, degree, cfg);
    EXPECT_TRUE(fit.converged) << fit.status;
    EXPECT_TRUE(std::isfinite(fit.aic()));
    EXPECT_EQ(fit.n_parameters, 8 + degree);
  }
  EXPECT_THROW(fit_static(data, 4, cfg), std::invalid_argument);
}

TEST(FitStatic, RecoversTruthInStaticWorld) {
  // No latent 1->2 transitions: the dynamic simulator produces static data.
  auto cfg = builtin_setting(Setting::s1);
  cfg.n = 20000;
  cfg.seed = 12;
  cfg.true_params.beta12 << -40, 0, 0;
  cfg.true_params.gamma12.setZero();
  const auto data = simulate_dataset(cfg).data;
  FitConfig fc;
  fc.n_starts = 2;
  const auto fit = fit_static(data, 0, fc);
  ASSERT_TRUE(fit.converged);
  const Vector truth = StaticParams{cfg.true_params.alpha, cfg.true_params.beta13,
                                    cfg.true_params.gamma13, 0}
                           .flatten();
  const auto se = hessian_se(
      [&](const Vector& v) {
        return static_log_likelihood(StaticParams::unflatten(v, 2, 2, 0), data);
      },
      fit.theta_hat.flatten());
  for (Eigen::Index j = 0; j < truth.size(); ++j)
    EXPECT_NEAR(fit.theta_hat.flatten()[j], truth[j], 4 * se.se[j]) << j;
}

TEST(FitNoStayer, ImpliesNoStayers) {
  const auto data = setting1_sample(1000, 15);
  const auto fit = fit_no_stayer(data, 0, FitConfig{});
  EXPECT_TRUE(fit.converged);
  const auto path = no_stayer_cumulative_path(fit.theta_hat, data[0].x,
                                              RowMatrix::Zero(3, 2), 3);
  for (const auto& c : path) EXPECT_EQ(c.stayer, 0.0);
}

TEST(StaticCumulative, StartAndGeometricLimit) {
  StaticParams p{vec({0.7}), vec({0.0}), vec({0.0}), 0};
  const double pi = 1 / (1 + std::exp(-0.7));
  const auto c0 = static_cumulative_probs(p, Vector(0), RowMatrix(0, 1), 0);
  EXPECT_NEAR(c0.stayer, 1 - pi, 1e-15);
  EXPECT_EQ(c0.mover, 0.0);
  const auto c = static_cumulative_probs(p, Vector(0), RowMatrix::Zero(8, 1), 8);
  EXPECT_NEAR(c.mover, pi * (1 - std::pow(2.0, -8)), 1e-14);
  EXPECT_NEAR(c.stayer, 1 - pi, 1e-15);
  EXPECT_NEAR(c.stayer + c.mover + c.at_risk, 1.0, 1e-14);
}

TEST(StaticCumulative, MatchesTwoPathEnumeration) {
  std::mt19937_64 rng(2);
  const auto p = random_static(rng, 1);
  const Vector x = vec({0.3, 1});
  RowMatrix z(4, 2);
  z << 0, 1, 0.4, 2, 1, 2, 2, 3;
  const double pi = 1 / (1 + std::exp(-(p.alpha[0] + p.alpha[1] * 0.3 + p.alpha[2])));
  double survive = 1.0;
  for (int t = 0; t <= 4; ++t) {
    const auto c = static_cumulative_probs(p, x, z, t);
    EXPECT_NEAR(c.mover, pi * (1 - survive), 1e-14);
    if (t < 4) {
      const double eta = p.beta[0] + p.beta[1] * 0.3 + p.beta[2] +
                         p.gamma[0] * z(t, 0) + p.gamma[1] * z(t, 1) + p.gamma[2] * t;
      survive *= 1 - 1 / (1 + std::exp(-eta));
    }
  }
  EXPECT_THROW(static_cumulative_probs(p, x, z, 5), DimensionError);
}
