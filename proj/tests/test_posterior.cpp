#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "hbrec/dataset.hpp"
#include "hbrec/posterior.hpp"

using namespace hbrec;

namespace {

SyntheticDataset tiny_dataset(std::uint64_t seed = 3, std::size_t per_group = 2, std::size_t trials = 30,
                              std::size_t arms = 2) {
  const BetaSpec tau(0.15, 30.0);
  DatasetConfig cfg{GroupSpec{BetaSpec(0.6, 5.0), tau, per_group, Group::Case},
                    GroupSpec{BetaSpec(0.3, 5.0), tau, per_group, Group::Control}};
  cfg.n_trials = trials;
  cfg.seed = seed;
  cfg.tolerance = 1.0;
  cfg.env.n_arms = arms;
  cfg.env.p_init.assign(arms, 0.5);
  return generate_dataset(cfg);
}

std::vector<double> random_point(const HierarchicalPosterior& post, Rng& rng) {
  std::vector<double> theta(post.dimension());
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (double& x : theta) x = u(rng);
  return theta;
}

double fd_coordinate(const HierarchicalPosterior& post, std::vector<double> theta, std::size_t k, double h = 1e-5) {
  const double x = theta[k];
  theta[k] = x + h;
  const double up = post.log_density_value(theta);
  theta[k] = x - h;
  const double down = post.log_density_value(theta);
  return (up - down) / (2 * h);
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

class GradientCheck : public ::testing::TestWithParam<ModelKind> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto ds = tiny_dataset();
  ASSERT_EQ(ds.n_subjects(), 4u);
  ModelSpec spec;
  spec.kind = GetParam();
  const HierarchicalPosterior post(spec, ds);
  Rng rng(123);
  for (int point = 0; point < 20; ++point) {
    const auto theta = random_point(post, rng);
    const auto r = post.log_density(theta);
    ASSERT_TRUE(r.finite);
    for (std::size_t k = 0; k < theta.size(); ++k)
      EXPECT_LT(relative_error(r.gradient[k], fd_coordinate(post, theta, k)), 1e-4) << "coordinate " << k;
  }
}

TEST_P(GradientCheck, ThreeArmKernel) {
  const auto ds = tiny_dataset(9, 2, 25, 3);
  ModelSpec spec;
  spec.kind = GetParam();
  const HierarchicalPosterior post(spec, ds);
  Rng rng(5);
  for (int point = 0; point < 5; ++point) {
    const auto theta = random_point(post, rng);
    const auto r = post.log_density(theta);
    for (std::size_t k = 0; k < theta.size(); ++k)
      EXPECT_LT(relative_error(r.gradient[k], fd_coordinate(post, theta, k)), 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(BothModels, GradientCheck,
                         ::testing::Values(ModelKind::SharedPrior, ModelKind::SeparatePriors));

TEST(SubjectLoglik, AlphaDerivativeMatchesFiniteDifference) {
  const auto ds = tiny_dataset(11, 2, 60);
  const auto& h = ds.subjects[0].history;
  for (double alpha : {0.05, 0.3, 0.7, 0.95}) {
    for (double tau : {0.05, 0.2, 0.8}) {
      const auto r = subject_loglik<true>(h.choices, h.rewards, 2, 0.5, alpha, tau);
      const double e = 1e-5;
      const double fd_a = (subject_loglik<false>(h.choices, h.rewards, 2, 0.5, alpha + e, tau).value -
                           subject_loglik<false>(h.choices, h.rewards, 2, 0.5, alpha - e, tau).value) /
                          (2 * e);
      const double fd_t = (subject_loglik<false>(h.choices, h.rewards, 2, 0.5, alpha, tau + e).value -
                           subject_loglik<false>(h.choices, h.rewards, 2, 0.5, alpha, tau - e).value) /
                          (2 * e);
      EXPECT_LT(std::abs(r.d_alpha - fd_a) / std::max(1.0, std::abs(fd_a)), 1e-5);
      EXPECT_LT(std::abs(r.d_tau - fd_t) / std::max(1.0, std::abs(fd_t)), 1e-5);
    }
  }
}

TEST(SubjectLoglik, PointwiseSumsToTotal) {
  const auto ds = tiny_dataset(4, 2, 50);
  const auto& h = ds.subjects[1].history;
  const auto two = subject_loglik<true>(h.choices, h.rewards, 2, 0.5, 0.4, 0.2);
  EXPECT_LE(two.value, 0.0);
  std::vector<double> pw(h.choices.size());
  const auto again = subject_loglik<true>(h.choices, h.rewards, 2, 0.5, 0.4, 0.2, pw);
  EXPECT_DOUBLE_EQ(two.value, again.value);
  double sum = 0;
  for (double x : pw) sum += x;
  EXPECT_NEAR(sum, two.value, 1e-10);
}

TEST(LogDensity, ComponentsSumToPosterior) {
  const auto ds = tiny_dataset();
  for (auto kind : {ModelKind::SharedPrior, ModelKind::SeparatePriors}) {
    ModelSpec spec;
    spec.kind = kind;
    const HierarchicalPosterior post(spec, ds);
    Rng rng(8);
    const auto theta = random_point(post, rng);
    const auto r = post.log_density(theta, true);
    ASSERT_EQ(r.pointwise_loglik.size(), 4u * 30u);
    double sum = 0;
    for (double x : r.pointwise_loglik) {
      EXPECT_LE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum + r.log_prior + r.log_jacobian, r.log_posterior, 1e-8);
    EXPECT_NEAR(r.log_posterior, post.log_density_value(theta), 1e-9);
  }
}

TEST(LogDensity, LikelihoodIndependentOfPriorStructure) {
  auto ds = tiny_dataset();
  // Make both groups byte-identical.
  for (std::size_t i = 0; i < 2; ++i) {
    ds.subjects[i + 2].history = ds.subjects[i].history;
    ds.subjects[i + 2].params = ds.subjects[i].params;
  }
  ModelSpec m1, m2;
  m1.kind = ModelKind::SharedPrior;
  m2.kind = ModelKind::SeparatePriors;
  const HierarchicalPosterior p1(m1, ds), p2(m2, ds);
  Rng rng(2);
  const auto t1 = random_point(p1, rng);
  std::vector<double> t2(t1.begin(), t1.end());
  t2.insert(t2.end(), t1.end() - 4, t1.end());  // second block = copy of the first
  const auto r1 = p1.log_density(t1), r2 = p2.log_density(t2);
  EXPECT_DOUBLE_EQ(r1.log_likelihood, r2.log_likelihood);
}

TEST(LogDensity, ZeroTrialSubjectContributesNoLikelihood) {
  auto ds = tiny_dataset();
  ds.subjects[0].history = {};
  ModelSpec spec;
  const HierarchicalPosterior post(spec, ds);
  Rng rng(4);
  auto theta = random_point(post, rng);
  const auto full = post.log_density(theta);
  // Changing subject 0's parameters only moves prior + Jacobian terms.
  auto ds_empty = ds;
  for (auto& s : ds_empty.subjects) s.history = {};
  const HierarchicalPosterior prior_only(spec, ds_empty);
  const auto r = prior_only.log_density(theta);
  EXPECT_DOUBLE_EQ(r.log_likelihood, 0.0);
  EXPECT_NEAR(r.log_posterior, r.log_prior + r.log_jacobian, 1e-12);
  EXPECT_DOUBLE_EQ(r.log_prior, full.log_prior);
  double lik_others = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    const auto& h = ds.subjects[i].history;
    lik_others += subject_loglik<false>(h.choices, h.rewards, 2, 0.5, math::logistic(theta[2 * i]),
                                        math::logistic(theta[2 * i + 1]))
                      .value;
  }
  EXPECT_NEAR(full.log_likelihood, lik_others, 1e-12);
}

TEST(LogDensity, ExchangeableWithinGroup) {
  const auto ds = tiny_dataset(21, 3, 30);
  auto swapped = ds;
  std::swap(swapped.subjects[0], swapped.subjects[2]);  // both case subjects
  for (auto kind : {ModelKind::SharedPrior, ModelKind::SeparatePriors}) {
    ModelSpec spec;
    spec.kind = kind;
    const HierarchicalPosterior a(spec, ds), b(spec, swapped);
    Rng rng(6);
    const auto theta = random_point(a, rng);
    auto theta_sw = theta;
    std::swap(theta_sw[0], theta_sw[4]);
    std::swap(theta_sw[1], theta_sw[5]);
    const auto ra = a.log_density(theta), rb = b.log_density(theta_sw);
    EXPECT_NEAR(ra.log_posterior, rb.log_posterior, 1e-10);
    EXPECT_NEAR(ra.gradient[0], rb.gradient[4], 1e-10);
    EXPECT_NEAR(ra.gradient[5], rb.gradient[1], 1e-10);
    for (std::size_t k = 12; k < theta.size(); ++k) EXPECT_NEAR(ra.gradient[k], rb.gradient[k], 1e-9);
  }
}

TEST(LogDensity, SeparatePriorBlocksDoNotSeeOtherGroup) {
  const auto ds = tiny_dataset();
  auto changed = ds;
  for (std::size_t i = 2; i < 4; ++i)
    for (auto& c : changed.subjects[i].history.choices) c = 1 - c;
  ModelSpec spec;
  spec.kind = ModelKind::SeparatePriors;
  const HierarchicalPosterior a(spec, ds), b(spec, changed);
  Rng rng(10);
  auto theta = random_point(a, rng);
  const auto ra = a.log_density(theta), rb = b.log_density(theta);
  const std::size_t case_block = a.layout().block(0);
  for (std::size_t k = case_block; k < case_block + 4; ++k) EXPECT_EQ(ra.gradient[k], rb.gradient[k]);
  // Control-subject parameters also shift the control block only.
  theta[4] += 0.7;
  const auto rc = a.log_density(theta);
  for (std::size_t k = case_block; k < case_block + 4; ++k) EXPECT_EQ(ra.gradient[k], rc.gradient[k]);
  EXPECT_NE(ra.gradient[a.layout().block(1)], rc.gradient[a.layout().block(1)]);
}

TEST(LogDensity, NonFiniteIntermediateGivesNegInfAndZeroGradient) {
  const auto ds = tiny_dataset();
  const HierarchicalPosterior post(ModelSpec{}, ds);
  std::vector<double> theta(post.dimension(), 0.0);
  theta[post.layout().block(0) + 1] = 800.0;  // kappa overflows
  const auto r = post.log_density(theta);
  EXPECT_FALSE(r.finite);
  EXPECT_EQ(r.log_posterior, -std::numeric_limits<double>::infinity());
  for (double g : r.gradient) EXPECT_EQ(g, 0.0);
}

TEST(LogDensity, WrongDimensionRejected) {
  const auto ds = tiny_dataset();
  const HierarchicalPosterior post(ModelSpec{}, ds);
  EXPECT_THROW(post.log_density(std::vector<double>(3, 0.0)), UsageError);
}

TEST(ParameterLayout, Dimensions) {
  const auto ds = tiny_dataset(1, 5, 10);
  ModelSpec m1, m2;
  m1.kind = ModelKind::SharedPrior;
  m2.kind = ModelKind::SeparatePriors;
  EXPECT_EQ(HierarchicalPosterior(m1, ds).dimension(), 2u * 10u + 4u);
  EXPECT_EQ(HierarchicalPosterior(m2, ds).dimension(), 2u * 10u + 8u);
  EXPECT_EQ(HierarchicalPosterior(m2, ds).layout().names().back(), "kappa_tau.1");
}

TEST(Constrain, Examples) {
  ParameterLayout layout{1, 1};
  const std::vector<double> zero(layout.dimension(), 0.0);
  const auto c = constrain(layout, zero);
  EXPECT_DOUBLE_EQ(c.alpha[0], 0.5);
  EXPECT_DOUBLE_EQ(c.tau[0], 0.5);
  EXPECT_DOUBLE_EQ(c.blocks[0].omega_alpha, 0.5);
  EXPECT_DOUBLE_EQ(c.blocks[0].kappa_alpha, 3.0);
}

TEST(Constrain, RoundTripProperty) {
  ParameterLayout layout{7, 2};
  Rng rng(99);
  std::uniform_real_distribution<double> u(-6, 6);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> theta(layout.dimension());
    for (double& x : theta) x = u(rng);
    const auto c = constrain(layout, theta);
    for (double a : c.alpha) ASSERT_TRUE(a > 0 && a < 1);
    for (const auto& b : c.blocks) ASSERT_GT(b.kappa_alpha, 2.0);
    const auto c2 = constrain(layout, unconstrain(layout, c));
    for (std::size_t s = 0; s < 7; ++s) {
      worst = std::max(worst, std::abs(c.alpha[s] - c2.alpha[s]));
      worst = std::max(worst, std::abs(c.tau[s] - c2.tau[s]));
    }
    for (std::size_t b = 0; b < 2; ++b) {
      worst = std::max(worst, std::abs(c.blocks[b].omega_tau - c2.blocks[b].omega_tau));
      worst = std::max(worst, std::abs(c.blocks[b].kappa_tau - c2.blocks[b].kappa_tau) / c.blocks[b].kappa_tau);
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(InitPoint, NoJitterIsDeterministic) {
  const auto ds = tiny_dataset();
  const HierarchicalPosterior post(ModelSpec{}, ds);
  Rng a(1), b(2);
  EXPECT_EQ(init_point(post, a, 0.0), init_point(post, b, 0.0));
  Rng c(3);
  EXPECT_THROW(init_point(post, c, -1.0), UsageError);
}

TEST(InitPoint, ClampsDegenerateSubjects) {
  auto ds = tiny_dataset();
  for (auto& c : ds.subjects[0].history.choices) c = 0;
  for (auto& r : ds.subjects[0].history.rewards) r = 1;
  ModelSpec spec;
  const HierarchicalPosterior post(spec, ds);
  Rng rng(1);
  const auto theta = init_point(post, rng, 0.0);
  const double lo = math::logit(0.05), hi = math::logit(0.95);
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    EXPECT_GE(theta[2 * i], lo - 1e-12);
    EXPECT_LE(theta[2 * i], hi + 1e-12);
    EXPECT_TRUE(std::isfinite(theta[2 * i + 1]));
  }
  EXPECT_DOUBLE_EQ(theta[post.layout().block(0)], 0.0);
  EXPECT_DOUBLE_EQ(theta[post.layout().block(0) + 1], 0.0);
  EXPECT_TRUE(std::isfinite(post.log_density_value(theta)));
}

TEST(SubjectMle, RecoversParametersOnLongHistories) {
  RovingBanditConfig env;
  env.seed = 12;
  const auto trace = generate_trace(env, 3000);
  for (double alpha : {0.15, 0.4, 0.7}) {
    const SubjectParams p(alpha, 0.1);
    const auto h = simulate_subject(p, trace, 3000, 77);
    const auto mle = fit_subject_mle(h.choices, h.rewards, 2, 0.5);
    EXPECT_NEAR(mle.alpha, alpha, 0.12);
    EXPECT_NEAR(mle.tau, 0.1, 0.05);
    // Local optimality: no nearby point has higher likelihood.
    for (double da : {-0.01, 0.01})
      EXPECT_LE(subject_loglik<false>(h.choices, h.rewards, 2, 0.5, mle.alpha + da, mle.tau).value, mle.loglik + 1e-6);
  }
}
