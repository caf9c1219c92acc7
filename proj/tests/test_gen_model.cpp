#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "hbrec/gen_model.hpp"

using namespace hbrec;

TEST(BetaShapes, SymmetricCase) {
  const auto s = beta_shapes(BetaSpec(0.5, 4.0));
  EXPECT_DOUBLE_EQ(s.a, 2.0);
  EXPECT_DOUBLE_EQ(s.b, 2.0);
}

TEST(BetaShapes, ConcentrationTwoIsUniform) {
  for (double mode : {0.0, 0.3, 0.5, 1.0}) {
    const auto s = beta_shapes(BetaSpec(mode, 2.0));
    EXPECT_DOUBLE_EQ(s.a, 1.0);
    EXPECT_DOUBLE_EQ(s.b, 1.0);
  }
}

TEST(BetaShapes, GridCorner) {
  const auto s = beta_shapes(BetaSpec(0.01, 30.0));
  EXPECT_NEAR(s.a, 1.28, 1e-12);
  EXPECT_NEAR(s.b, 28.72, 1e-12);
}

TEST(BetaShapes, ShapesAtLeastOneAndArgmaxIsMode) {
  for (double mode : {0.01, 0.1, 0.3, 0.5, 0.9, 0.99}) {
    for (double k : {2.5, 3.0, 5.0, 10.0, 30.0}) {
      const auto s = beta_shapes(BetaSpec(mode, k));
      EXPECT_GE(s.a, 1.0);
      EXPECT_GE(s.b, 1.0);
      // Brute-force argmax of the unnormalized log density on a fine grid.
      double best_x = 0, best = -1e300;
      for (int i = 1; i < 100000; ++i) {
        const double x = i / 100000.0;
        const double v = (s.a - 1) * std::log(x) + (s.b - 1) * std::log1p(-x);
        if (v > best) {
          best = v;
          best_x = x;
        }
      }
      EXPECT_NEAR(best_x, mode, 2e-5) << mode << " " << k;
    }
  }
}

TEST(BetaSpec, RejectsInvalid) {
  EXPECT_THROW(BetaSpec(-0.1, 3.0), UsageError);
  EXPECT_THROW(BetaSpec(1.1, 3.0), UsageError);
  EXPECT_THROW(BetaSpec(0.5, 1.9), UsageError);
}

TEST(SubjectParams, RejectsBoundaryValues) {
  EXPECT_THROW(SubjectParams(0.0, 0.5), UsageError);
  EXPECT_THROW(SubjectParams(0.5, 0.0), UsageError);
  EXPECT_THROW(SubjectParams(1.0, 0.5), UsageError);
  EXPECT_NO_THROW(SubjectParams(0.5, 1.0));
}

TEST(SubjectParams, ClampedKeepsTransformFinite) {
  const auto p = SubjectParams::clamped(0.0, 1.0);
  EXPECT_DOUBLE_EQ(p.learning_rate(), 1e-4);
  EXPECT_DOUBLE_EQ(p.temperature(), 1.0 - 1e-4);
}

TEST(QUpdate, Examples) {
  EXPECT_EQ(q_update({{0.0, 0.0}, 0.5}, 0, 1.0, 0.5).values, (std::vector<double>{0.5, 0.0}));
  EXPECT_EQ(q_update({{0.3, 0.7}, 0.5}, 1, 1.0, 0.0).values, (std::vector<double>{0.3, 0.7}));
  EXPECT_EQ(q_update({{0.3, 0.7}, 0.5}, 0, 0.0, 1.0).values, (std::vector<double>{0.0, 0.7}));
}

TEST(QUpdate, OutOfRangeArm) {
  EXPECT_THROW(q_update(ValueState::initial(2), 2, 1.0, 0.5), UsageError);
  EXPECT_THROW(q_update(ValueState::initial(2), 0, 1.0, 1.5), UsageError);
}

TEST(QUpdate, ContractionTowardReward) {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = uniform01(rng), r = uniform01(rng) < 0.5 ? 0.0 : 1.0, a = uniform01(rng);
    const auto next = q_update({{v, 0.2}, 0.5}, 0, r, a);
    EXPECT_NEAR(std::abs(next.values[0] - r), (1 - a) * std::abs(v - r), 1e-15);
  }
}

TEST(ChoiceProbabilities, Examples) {
  for (double c : {-3.0, 0.0, 0.4, 10.0}) {
    const auto p = choice_probabilities({{c, c}, 0.5}, 0.37);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
  }
  const auto p = choice_probabilities({{1.0, 0.0}, 0.5}, 1.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / (1 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(p[0], 0.73106, 1e-5);
  EXPECT_NEAR(p[1], 0.26894, 1e-5);
  const auto sharp = choice_probabilities({{1.0, 0.0}, 0.5}, 0.01);
  EXPECT_DOUBLE_EQ(sharp[0], 1.0);
  EXPECT_LT(sharp[1], 1e-20);
}

TEST(ChoiceProbabilities, RejectsNonPositiveTau) {
  EXPECT_THROW(choice_probabilities(ValueState::initial(2), 0.0), UsageError);
  EXPECT_THROW(choice_probabilities(ValueState::initial(2), -1.0), UsageError);
}

TEST(ChoiceProbabilities, ShiftInvariantAndNormalized) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    ValueState s{{uniform01(rng), uniform01(rng), uniform01(rng)}, 0.5};
    const double tau = 0.01 + uniform01(rng);
    const double shift = 20 * (uniform01(rng) - 0.5);
    ValueState t = s;
    for (double& v : t.values) v += shift;
    const auto p = choice_probabilities(s, tau);
    const auto q = choice_probabilities(t, tau);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(p[a], q[a], 1e-12);
  }
}

namespace {
EnvTrace static_trace(std::size_t n, double p0, double p1) {
  std::vector<double> probs;
  for (std::size_t t = 0; t < n; ++t) {
    probs.push_back(p0);
    probs.push_back(p1);
  }
  return {n, 2, probs};
}
}  // namespace

TEST(SimulateSubject, GreedyAgentExploitsDeterministicArm) {
  const auto trace = static_trace(500, 1.0, 0.0);
  const auto h = simulate_subject(SubjectParams(0.9999, 0.01), trace, 500, 3);
  const auto first = static_cast<std::size_t>(std::find(h.rewards.begin(), h.rewards.end(), 1) - h.rewards.begin());
  ASSERT_LT(first, h.rewards.size());
  std::size_t arm0 = 0;
  for (std::size_t t = first + 1; t < h.choices.size(); ++t) arm0 += h.choices[t] == 0;
  EXPECT_GE(static_cast<double>(arm0), 0.99 * static_cast<double>(h.choices.size() - first - 1));
}

TEST(SimulateSubject, UniformChoiceWithoutLearning) {
  // With v0 = 0 and no reward ever delivered, every update leaves V = (0, 0),
  // so choices stay uniform whatever the learning rate.
  const std::size_t n = 10000;
  const auto trace = static_trace(n, 0.0, 0.0);
  const auto h = simulate_subject(SubjectParams(0.3, 1.0), trace, n, 5, 0.0);
  const double freq = std::count(h.choices.begin(), h.choices.end(), 0) / static_cast<double>(n);
  EXPECT_NEAR(freq, 0.5, 3 * std::sqrt(0.25 / n));
}

TEST(SimulateSubject, DeterministicGivenSeed) {
  RovingBanditConfig env;
  const auto trace = generate_trace(env, 200);
  const SubjectParams p(0.3, 0.2);
  EXPECT_EQ(simulate_subject(p, trace, 200, 42), simulate_subject(p, trace, 200, 42));
  EXPECT_NE(simulate_subject(p, trace, 200, 42), simulate_subject(p, trace, 200, 43));
}

TEST(SimulateSubject, ValuesStayInUnitInterval) {
  RovingBanditConfig env;
  const auto trace = generate_trace(env, 2000);
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const double alpha = 0.001 + 0.998 * uniform01(rng);
    const auto h = simulate_subject(SubjectParams(alpha, 0.2), trace, 2000, k);
    ValueState s = ValueState::initial(2);
    for (std::size_t t = 0; t < h.choices.size(); ++t) {
      s = q_update(s, h.choices[t], h.rewards[t], alpha);
      for (double v : s.values) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(SimulateSubject, RejectsZeroTrials) {
  const auto trace = static_trace(10, 0.5, 0.5);
  EXPECT_THROW(simulate_subject(SubjectParams(0.3, 0.2), trace, 0, 1), UsageError);
  EXPECT_THROW(simulate_subject(SubjectParams(0.3, 0.2), trace, 11, 1), UsageError);
}
