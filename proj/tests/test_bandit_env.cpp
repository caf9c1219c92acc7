#include <sstream>

#include <gtest/gtest.h>

#include "hbrec/bandit_env.hpp"

using namespace hbrec;

TEST(GenerateTrace, ZeroDriftIsStationary) {
  RovingBanditConfig cfg;
  cfg.drift_sd = 0.0;
  cfg.p_init = {0.8, 0.2};
  const auto t = generate_trace(cfg, 300);
  for (std::size_t i = 0; i < t.n_trials(); ++i) {
    EXPECT_EQ(t.probability(i, 0), 0.8);
    EXPECT_EQ(t.probability(i, 1), 0.2);
  }
}

TEST(GenerateTrace, BoundedWithNearUniformLongRunMean) {
  RovingBanditConfig cfg;
  cfg.drift_sd = 0.05;
  cfg.seed = 99;
  const auto t = generate_trace(cfg, 10000);
  for (std::size_t a = 0; a < 2; ++a) {
    double sum = 0;
    for (std::size_t i = 0; i < t.n_trials(); ++i) {
      const double p = t.probability(i, a);
      ASSERT_GE(p, 0.2);
      ASSERT_LE(p, 0.8);
      sum += p;
    }
    const double mean = sum / 10000.0;
    EXPECT_GE(mean, 0.4);
    EXPECT_LE(mean, 0.6);
  }
}

TEST(GenerateTrace, SeedDeterminism) {
  RovingBanditConfig cfg;
  cfg.seed = 5;
  const auto a = generate_trace(cfg, 200);
  EXPECT_EQ(a, generate_trace(cfg, 200));
  cfg.seed = 6;
  EXPECT_NE(a, generate_trace(cfg, 200));
}

TEST(GenerateTrace, ReflectionPreservesBoundsForLargeSteps) {
  for (double sd : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RovingBanditConfig cfg;
      cfg.drift_sd = sd;
      cfg.seed = seed;
      cfg.p_lo = 0.1;
      cfg.p_hi = 0.35;
      cfg.p_init = {0.2, 0.3};
      const auto t = generate_trace(cfg, 2000);
      for (double p : t.data()) {
        ASSERT_GE(p, 0.1);
        ASSERT_LE(p, 0.35);
      }
    }
  }
}

TEST(ReflectInto, MirrorsAtWalls) {
  EXPECT_DOUBLE_EQ(reflect_into(0.85, 0.2, 0.8), 0.75);
  EXPECT_DOUBLE_EQ(reflect_into(0.1, 0.2, 0.8), 0.3);
  EXPECT_NEAR(reflect_into(0.8 + 0.6 + 0.1, 0.2, 0.8), 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(reflect_into(0.5, 0.2, 0.8), 0.5);
}

TEST(RovingBanditConfig, RejectsInvalid) {
  RovingBanditConfig cfg;
  cfg.p_lo = 0.9;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = {};
  cfg.p_init = {0.1, 0.5};
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = {};
  cfg.drift_sd = -1;
  EXPECT_THROW(cfg.validate(), UsageError);
  EXPECT_THROW(generate_trace(RovingBanditConfig{}, 0), UsageError);
}

TEST(DrawReward, CertainProbabilities) {
  const EnvTrace t(1, 2, {1.0, 0.0});
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(draw_reward(t, 0, 0, rng), 1);
    EXPECT_EQ(draw_reward(t, 0, 1, rng), 0);
  }
}

TEST(DrawReward, EmpiricalMean) {
  const EnvTrace t(1, 2, {0.7, 0.3});
  Rng rng(2);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += draw_reward(t, 0, 0, rng);
  EXPECT_NEAR(sum / n, 0.7, 0.005);
}

TEST(DrawReward, OutOfRange) {
  const EnvTrace t(2, 2, {0.5, 0.5, 0.5, 0.5});
  Rng rng(1);
  EXPECT_THROW(draw_reward(t, 2, 0, rng), UsageError);
  EXPECT_THROW(draw_reward(t, 0, 2, rng), UsageError);
}

TEST(EnvTraceCsv, Layout) {
  const EnvTrace t(2, 2, {0.25, 0.75, 0.5, 0.125});
  std::ostringstream os;
  write_trace_csv(t, os);
  EXPECT_EQ(os.str(), "trial,arm,probability\n0,0,0.25\n0,1,0.75\n1,0,0.5\n1,1,0.125\n");
}
