#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "hbrec/rng.hpp"
#include "hbrec/sampler/diagnostics.hpp"

using namespace hbrec;

namespace {

ChainDraws iid_normal(std::size_t chains, std::size_t n, std::uint64_t seed, double shift_per_chain = 0.0) {
  Rng rng(seed);
  std::normal_distribution<double> z;
  ChainDraws out(chains, std::vector<double>(n));
  for (std::size_t c = 0; c < chains; ++c)
    for (double& x : out[c]) x = z(rng) + shift_per_chain * static_cast<double>(c);
  return out;
}

}  // namespace

TEST(SplitRhat, ConstantChainsAreInfinite) {
  const ChainDraws c(4, std::vector<double>(100, 2.5));
  EXPECT_EQ(split_rhat(c), std::numeric_limits<double>::infinity());
  EXPECT_EQ(ess_bulk(c), 0.0);
}

TEST(SplitRhat, SameDistributionNearOne) {
  const auto c = iid_normal(4, 1000, 1);
  const double r = split_rhat(c);
  EXPECT_GE(r, 0.995);
  EXPECT_LE(r, 1.01);
}

TEST(SplitRhat, DisjointChainsFlagged) {
  const auto c = iid_normal(4, 500, 2, 10.0);
  EXPECT_GT(split_rhat(c), 3.0);
}

TEST(SplitRhat, DetectsTrendWithinChain) {
  // One chain drifting: the split halves disagree even though chains agree overall.
  ChainDraws c(2, std::vector<double>(400));
  Rng rng(3);
  std::normal_distribution<double> z(0, 0.1);
  for (auto& chain : c)
    for (std::size_t i = 0; i < chain.size(); ++i) chain[i] = static_cast<double>(i) / 100.0 + z(rng);
  EXPECT_GT(split_rhat(c), 1.5);
}

TEST(SplitRhat, AffineInvariant) {
  auto c = iid_normal(3, 300, 4, 0.2);
  const double r = split_rhat(c);
  for (auto& chain : c)
    for (double& x : chain) x = 7.0 - 3.0 * x;
  EXPECT_NEAR(split_rhat(c), r, 1e-12);
}

TEST(EssBulk, IidNearSampleSize) {
  const auto c = iid_normal(4, 1000, 5);
  const double e = ess_bulk(c);
  EXPECT_GT(e, 3200.0);
  EXPECT_LT(e, 4800.0);
}

TEST(EssBulk, AntitheticExceedsSampleSize) {
  ChainDraws c(2, std::vector<double>(1000));
  Rng rng(6);
  std::normal_distribution<double> z(0, 0.05);
  for (auto& chain : c)
    for (std::size_t i = 0; i < chain.size(); ++i) chain[i] = (i % 2 ? 1.0 : -1.0) + z(rng);
  EXPECT_GT(ess_bulk(c), 2000.0);
}

TEST(EssBulk, Ar1MatchesTheory) {
  const double phi = 0.9;
  const std::size_t n = 5000, chains = 4;
  Rng rng(7);
  std::normal_distribution<double> z;
  ChainDraws c(chains, std::vector<double>(n));
  for (auto& chain : c) {
    double x = z(rng) / std::sqrt(1 - phi * phi);
    for (double& v : chain) {
      x = phi * x + z(rng);
      v = x;
    }
  }
  const double expected = static_cast<double>(n * chains) * (1 - phi) / (1 + phi);
  const double e = ess_bulk(c);
  EXPECT_GT(e, expected / 1.5);
  EXPECT_LT(e, expected * 1.5);
  EXPECT_GT(ess_mean(c), expected / 1.5);
  EXPECT_LT(ess_mean(c), expected * 1.5);
}

TEST(EssBulk, InvariantUnderMonotoneTransform) {
  auto c = iid_normal(2, 400, 8);
  const double e = ess_bulk(c);
  for (auto& chain : c)
    for (double& x : chain) x = std::exp(x);
  EXPECT_DOUBLE_EQ(ess_bulk(c), e);
}

TEST(Diagnostics, RejectMalformedInput) {
  EXPECT_THROW(split_rhat(ChainDraws{}), UsageError);
  EXPECT_THROW(split_rhat(ChainDraws{{1.0, 2.0, 3.0, 4.0}, {1.0, 2.0}}), UsageError);
  EXPECT_THROW(ess_bulk(ChainDraws{{1.0, 2.0}}), UsageError);
}
