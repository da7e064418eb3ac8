#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace moverstayer;
using mstest::vec;

TEST(InitialRiskProb, ZeroCoefficientsGiveOneHalf) {
  EXPECT_DOUBLE_EQ(initial_risk_prob(vec({0, 0, 0}), vec({1.3, -2.0})), 0.5);
}

TEST(InitialRiskProb, MatchesScalarEvaluation) {
  // 1 / (1 + exp(-0.8)), evaluated at 30 digits
  EXPECT_NEAR(initial_risk_prob(vec({0.8, 0.5, -1}), vec({0, 0})),
              0.689974481127612442633874061948, 1e-15);
}

TEST(InitialRiskProb, SaturatesWithoutUnderflowOrOverflow) {
  const double low = initial_risk_prob(vec({-30, 0, 0}), vec({0.3, 1}));
  EXPECT_LT(low, 1e-13);
  EXPECT_GT(low, 0.0);
  EXPECT_TRUE(std::isfinite(initial_risk_prob(vec({700}), Vector(0))));
  EXPECT_TRUE(std::isfinite(initial_risk_prob(vec({-700}), Vector(0))));
  EXPECT_EQ(initial_risk_prob(vec({700}), Vector(0)), 1.0);
}

TEST(InitialRiskProb, RejectsDimensionMismatch) {
  EXPECT_THROW(initial_risk_prob(vec({0, 0}), vec({1, 2})), DimensionError);
}

TEST(InitialRiskProb, MonotoneInCovariateWithPositiveCoefficient) {
  const Vector alpha = vec({-0.3, 0.7, -1.2});
  double prev = 0.0;
  for (double x1 = -5; x1 <= 5; x1 += 0.25) {
    const double p = initial_risk_prob(alpha, vec({x1, 0.4}));
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(InitialRiskProb, ShiftedCovariateWithAdjustedIntercept) {
  const Vector alpha = vec({0.8, 0.5, -1});
  const Vector x = vec({0.3, 1});
  const double c = 2.5;
  Vector shifted_alpha = alpha;
  shifted_alpha[0] -= c * alpha[1];
  EXPECT_NEAR(initial_risk_prob(alpha, x),
              initial_risk_prob(shifted_alpha, vec({x[0] + c, x[1]})), 1e-14);
}

TEST(TransitionProbs, ZeroParametersAreUniform) {
  const auto p = ModelParams::zeros(2, 2);
  const auto tp = transition_probs(p, vec({1, 0}), vec({0.5, 3}));
  EXPECT_NEAR(tp.p11, 1.0 / 3, 1e-15);
  EXPECT_NEAR(tp.p12, 1.0 / 3, 1e-15);
  EXPECT_NEAR(tp.p13, 1.0 / 3, 1e-15);
}

TEST(TransitionProbs, MatchesScalarEvaluation) {
  const auto tp =
      transition_probs(mstest::setting1_params(), vec({0, 0}), vec({0, 3}));
  EXPECT_NEAR(tp.p12, 0.131548592615571573567641627449, 1e-12);
  EXPECT_NEAR(tp.p13, 0.216886962775958658916828768204, 1e-12);
  EXPECT_NEAR(tp.p11, 0.651564444608469767515529604346, 1e-12);
}

TEST(TransitionProbs, DegenerateLogits) {
  auto p = ModelParams::zeros(1, 1);
  p.beta12[0] = -1e4;
  p.beta13[0] = -1e4;
  const auto tp = transition_probs(p, vec({0.2}), vec({1}));
  EXPECT_NEAR(tp.p11, 1.0, 1e-12);
  EXPECT_GE(tp.p12, 0.0);
  EXPECT_GE(tp.p13, 0.0);
  p.beta12[0] = 1e4;
  const auto big = transition_probs(p, vec({0.2}), vec({1}));
  EXPECT_NEAR(big.p12, 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(big.p11));
}

TEST(TransitionProbs, SimplexOnRandomInputs) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 2000; ++rep) {
    const auto p = mstest::random_params(rng, 2, 2, 40.0);
    const auto tp = transition_probs(p, vec({n01(rng), n01(rng)}),
                                     vec({n01(rng), n01(rng)}));
    EXPECT_NEAR(tp.p11 + tp.p12 + tp.p13, 1.0, 1e-12);
    for (double v : {tp.p11, tp.p12, tp.p13}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(TransitionProbs, InterceptShiftInvariance) {
  auto p = mstest::setting1_params();
  const Vector x = vec({0.4, 1});
  const Vector z = vec({1.1, 2});
  const auto base = transition_probs(p, x, z);
  const double c = -1.7;
  p.beta12[0] -= c * p.beta12[1];
  p.beta13[0] -= c * p.beta13[1];
  const auto shifted = transition_probs(p, vec({x[0] + c, x[1]}), z);
  EXPECT_NEAR(base.p12, shifted.p12, 1e-14);
  EXPECT_NEAR(base.p13, shifted.p13, 1e-14);
}

TEST(TransitionProbs, RejectsDimensionMismatch) {
  const auto p = ModelParams::zeros(2, 2);
  EXPECT_THROW(transition_probs(p, vec({1}), vec({0, 0})), DimensionError);
  EXPECT_THROW(transition_probs(p, vec({1, 1}), vec({0})), DimensionError);
}

TEST(ModelParams, FlattenRoundTripAndNames) {
  const auto p = mstest::setting1_params();
  const Vector theta = p.flatten();
  ASSERT_EQ(theta.size(), 13);
  EXPECT_DOUBLE_EQ(theta[0], 0.8);
  EXPECT_DOUBLE_EQ(theta[3], -1.0);
  EXPECT_DOUBLE_EQ(theta[6], -2.0);
  EXPECT_DOUBLE_EQ(theta[9], 0.11);
  EXPECT_DOUBLE_EQ(theta[12], 0.3);
  const auto back = ModelParams::unflatten(theta, 2, 2);
  EXPECT_EQ(back.flatten(), theta);
  const auto names = parameter_names(2, 2);
  ASSERT_EQ(names.size(), 13u);
  EXPECT_EQ(names[0], "alpha[1]");
  EXPECT_EQ(names[12], "gamma13[2]");
  EXPECT_THROW(ModelParams::unflatten(theta.head(12), 2, 2), DimensionError);
}

TEST(ModelParams, ValidateRejectsNonFinite) {
  auto p = mstest::setting1_params();
  p.gamma12[1] = std::nan("");
  EXPECT_ANY_THROW(p.validate());
}

TEST(CumulativeStateProbs, StartsAtInitialMixture) {
  const auto p = mstest::setting1_params();
  const Vector x = vec({0.2, 1});
  const RowMatrix z(0, 2);
  const auto c = cumulative_state_probs(p, x, z, 0);
  EXPECT_NEAR(c.stayer, 1.0 - initial_risk_prob(p.alpha, x), 1e-15);
  EXPECT_EQ(c.mover, 0.0);
}

TEST(CumulativeStateProbs, MatchesBruteForceEnumeration) {
  const auto p = mstest::setting1_params();
  const Vector x = vec({0, 0});
  RowMatrix z(3, 2);
  z << 0, 3, 0.4, 2, 1.3, 4;
  const auto c = cumulative_state_probs(p, x, z, 3);
  const auto brute = mstest::brute_force_occupancy(p, x, z, 3);
  EXPECT_NEAR(c.at_risk, brute[0], 1e-14);
  EXPECT_NEAR(c.stayer, brute[1], 1e-14);
  EXPECT_NEAR(c.mover, brute[2], 1e-14);
}

TEST(CumulativeStateProbs, RandomPathsAgreeWithBruteForce) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = mstest::random_params(rng, 1, 2);
    const Vector x = vec({n01(rng)});
    RowMatrix z(5, 2);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n01(rng);
    const auto path = cumulative_state_path(p, x, z, 5);
    for (int t = 0; t <= 5; ++t) {
      const auto brute = mstest::brute_force_occupancy(p, x, z, t);
      const auto& c = path[static_cast<std::size_t>(t)];
      EXPECT_NEAR(c.at_risk, brute[0], 1e-13);
      EXPECT_NEAR(c.stayer, brute[1], 1e-13);
      EXPECT_NEAR(c.mover, brute[2], 1e-13);
    }
  }
}

TEST(CumulativeStateProbs, TotalProbabilityAndMonotonicity) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 100; ++rep) {
    const auto p = mstest::random_params(rng, 2, 2, 3.0);
    const Vector x = vec({n01(rng), n01(rng)});
    RowMatrix z(10, 2);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n01(rng);
    const auto path = cumulative_state_path(p, x, z, 10);
    for (std::size_t t = 0; t < path.size(); ++t) {
      EXPECT_NEAR(path[t].stayer + path[t].mover + path[t].at_risk, 1.0, 1e-12);
      if (t > 0) {
        EXPECT_GE(path[t].stayer, path[t - 1].stayer);
        EXPECT_GE(path[t].mover, path[t - 1].mover);
      }
    }
  }
}

TEST(CumulativeStateProbs, RejectsShortHistory) {
  const auto p = mstest::setting1_params();
  EXPECT_THROW(cumulative_state_probs(p, vec({0, 0}), RowMatrix::Zero(2, 2), 3),
               DimensionError);
}
