#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "hbrec/errors.hpp"
#include "hbrec/math.hpp"

namespace hbrec {

using ChainDraws = std::vector<std::vector<double>>;  ///< [chain][draw]

namespace detail {

inline void check_chains(const ChainDraws& chains, const char* who) {
  if (chains.size() < 1) throw UsageError(std::string(who) + ": need at least one chain");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw UsageError(std::string(who) + ": chains must have equal length");
  if (chains.size() * n < 8 || n < 4) throw UsageError(std::string(who) + ": need >= 4 draws per chain");
}

/// Splits every chain into two halves, dropping the middle draw of odd chains.
inline ChainDraws split_chains(const ChainDraws& chains) {
  const std::size_t n = chains.front().size();
  const std::size_t half = n / 2;
  ChainDraws out;
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

/// Replaces draws by normal scores of their pooled ranks (average ranks for
/// ties), z = Phi^-1((r - 3/8) / (S + 1/4)).
inline ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i) all.push_back({chains[c][i], c * chains[c].size() + i});
  std::sort(all.begin(), all.end());
  const double s = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1 .. j
    const double p = (rank - 0.375) / (s + 0.25);
    const double score = std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0);
    for (std::size_t k = i; k < j; ++k) z[all[k].second] = score;
    i = j;
  }
  ChainDraws out = chains;
  const std::size_t n = chains.front().size();
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) out[c][i] = z[c * n + i];
  return out;
}

/// Multi-chain ESS with Geyer's initial monotone sequence.
inline double ess_raw(const ChainDraws& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = math::mean(chains[c]);
    vars[c] = math::variance(chains[c]);
  }
  const double mean_var = math::mean(vars);
  double var_plus = mean_var * (static_cast<double>(n) - 1.0) / static_cast<double>(n);
  if (m > 1) var_plus += math::variance(means);
  if (!(var_plus > 0) || !std::isfinite(var_plus)) return 0.0;

  // Biased per-chain autocovariance at lag t, averaged over chains.
  auto mean_acov = [&](std::size_t t) {
    double total = 0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0;
      for (std::size_t i = 0; i + t < n; ++i) s += (chains[c][i] - means[c]) * (chains[c][i + t] - means[c]);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };
  auto rho = [&](std::size_t t) { return 1.0 - (mean_var - mean_acov(t)) / var_plus; };

  // Gamma_k = rho_2k + rho_2k+1, truncated at the first non-positive pair and
  // forced to be monotone non-increasing.
  double sum = 0;
  double prev = math::kInf;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double gamma = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
    if (!(gamma > 0)) break;
    gamma = std::min(gamma, prev);
    prev = gamma;
    sum += gamma;
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0 + 2.0 * sum;
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace detail

/// Split-chain potential scale reduction. +inf when the within-chain
/// variance is zero.
inline double split_rhat(const ChainDraws& chains) {
  detail::check_chains(chains, "split_rhat");
  const auto split = detail::split_chains(chains);
  const auto n = static_cast<double>(split.front().size());
  std::vector<double> means, vars;
  for (const auto& c : split) {
    means.push_back(math::mean(c));
    vars.push_back(math::variance(c));
  }
  const double w = math::mean(vars);
  if (!(w > 0)) return math::kInf;
  const double b_over_n = math::variance(means);
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

/// Rank-normalized bulk effective sample size. 0 for constant draws.
inline double ess_bulk(const ChainDraws& chains) {
  detail::check_chains(chains, "ess_bulk");
  auto split = detail::split_chains(chains);
  bool constant = true;
  for (const auto& c : split)
    for (double x : c) constant = constant && x == split.front().front();
  if (constant) return 0.0;
  return detail::ess_raw(detail::rank_normalize(split));
}

/// ESS on the raw (not rank-normalized) split draws; used for Monte Carlo
/// standard errors of means.
inline double ess_mean(const ChainDraws& chains) {
  detail::check_chains(chains, "ess_mean");
  return detail::ess_raw(detail::split_chains(chains));
}

}  // namespace hbrec
