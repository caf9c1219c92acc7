#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "hbrec/dataset.hpp"
#include "hbrec/posterior.hpp"
#include "hbrec/sampler/diagnostics.hpp"
#include "hbrec/sampler/nuts.hpp"
#include "hbrec/waic.hpp"

namespace hbrec {

/// A fit is usable when every split-Rhat is below this and divergences stay
/// under `kMaxDivergenceRate` of retained draws.
inline constexpr double kMaxUsableRhat = 1.05;
inline constexpr double kMaxDivergenceRate = 0.05;
inline constexpr double kRetryTargetAccept = 0.95;

struct FitOptions {
  double init_jitter = 0.5;
  bool store_pointwise = false;  ///< keep the full [point][draw] log-likelihood matrix
};

/// Posterior draws of one hierarchical model fit, in constrained space.
struct FitResult {
  ModelSpec spec;
  ParameterLayout layout;
  SamplerConfig config;
  std::size_t n_chains = 0;
  std::size_t n_draws = 0;  ///< per chain
  std::vector<double> draws;  ///< constrained, [chain][draw][parameter]
  std::vector<std::uint8_t> divergent;
  std::vector<double> rhat;  ///< per parameter
  std::vector<double> ess;   ///< per parameter (bulk)
  std::vector<ChainStats> chains;
  WaicResult waic;
  std::vector<std::vector<double>> pointwise;  ///< [point][draw], only with FitOptions::store_pointwise
  bool usable = false;
  bool retried = false;

  std::size_t dim() const noexcept { return layout.dimension(); }

  double value(std::size_t chain, std::size_t draw, std::size_t k) const {
    return draws[(chain * n_draws + draw) * dim() + k];
  }

  ChainDraws coordinate(std::size_t k) const {
    ChainDraws out(n_chains, std::vector<double>(n_draws));
    for (std::size_t c = 0; c < n_chains; ++c)
      for (std::size_t i = 0; i < n_draws; ++i) out[c][i] = value(c, i, k);
    return out;
  }

  double posterior_mean(std::size_t k) const {
    double s = 0;
    for (std::size_t c = 0; c < n_chains; ++c)
      for (std::size_t i = 0; i < n_draws; ++i) s += value(c, i, k);
    return s / static_cast<double>(n_chains * n_draws);
  }

  double posterior_sd(std::size_t k) const {
    const double m = posterior_mean(k);
    double s = 0;
    for (std::size_t c = 0; c < n_chains; ++c)
      for (std::size_t i = 0; i < n_draws; ++i) s += (value(c, i, k) - m) * (value(c, i, k) - m);
    return std::sqrt(s / static_cast<double>(n_chains * n_draws - 1));
  }

  std::size_t total_divergences() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += c.divergences;
    return n;
  }

  double max_rhat() const {
    double m = 0;
    for (double r : rhat) m = std::max(m, std::isnan(r) ? math::kInf : r);
    return m;
  }

  double min_ess() const {
    double m = math::kInf;
    for (double e : ess) m = std::min(m, e);
    return m;
  }

  double divergence_rate() const {
    return static_cast<double>(total_divergences()) / static_cast<double>(n_chains * n_draws);
  }

  bool passes_gate() const { return max_rhat() < kMaxUsableRhat && divergence_rate() < kMaxDivergenceRate; }
};

namespace detail {

struct PointwiseObserver {
  const HierarchicalPosterior* post = nullptr;
  WaicAccumulator acc;
  std::vector<double> buffer;
  std::vector<std::vector<double>>* store = nullptr;  // [draw][point] for this chain

  void operator()(std::span<const double> q) {
    post->pointwise_loglik(q, buffer);
    acc.add(buffer);
    if (store) store->push_back(buffer);
  }
};

}  // namespace detail

/// Fits one model to one dataset with NUTS. Chains start from jittered
/// ML-based initial points and run with independent RNG streams.
inline FitResult nuts_fit(const ModelSpec& spec, const SyntheticDataset& data, const SamplerConfig& cfg,
                          const FitOptions& opts = {}) {
  cfg.validate();
  const HierarchicalPosterior post(spec, data);
  std::vector<std::vector<double>> inits;
  for (std::size_t c = 0; c < cfg.n_chains; ++c) {
    Rng rng(derive_seed(cfg.seed, {0x696e6974ULL, c}));
    inits.push_back(init_point(post, rng, opts.init_jitter));
  }

  std::vector<std::vector<std::vector<double>>> stored(cfg.n_chains);
  std::vector<detail::PointwiseObserver> observers(cfg.n_chains);
  for (std::size_t c = 0; c < cfg.n_chains; ++c) {
    observers[c].post = &post;
    observers[c].acc = WaicAccumulator(post.n_points());
    observers[c].buffer.assign(post.n_points(), 0.0);
    if (opts.store_pointwise) observers[c].store = &stored[c];
  }
  const NutsOutput raw = nuts_sample(post, inits, cfg, &observers);

  FitResult fit;
  fit.spec = spec;
  fit.layout = post.layout();
  fit.config = cfg;
  fit.n_chains = raw.n_chains;
  fit.n_draws = raw.n_draws;
  fit.divergent = raw.divergent;
  fit.chains = raw.chains;
  fit.draws.resize(raw.draws.size());
  const std::size_t dim = fit.dim();
  for (std::size_t c = 0; c < raw.n_chains; ++c) {
    for (std::size_t i = 0; i < raw.n_draws; ++i) {
      const auto cp = constrain(fit.layout, raw.draw(c, i));
      double* out = fit.draws.data() + (c * raw.n_draws + i) * dim;
      for (std::size_t s = 0; s < fit.layout.n_subjects; ++s) {
        out[fit.layout.alpha(s)] = cp.alpha[s];
        out[fit.layout.tau(s)] = cp.tau[s];
      }
      for (std::size_t b = 0; b < fit.layout.n_blocks; ++b) {
        const std::size_t k = fit.layout.block(b);
        out[k] = cp.blocks[b].omega_alpha;
        out[k + 1] = cp.blocks[b].kappa_alpha;
        out[k + 2] = cp.blocks[b].omega_tau;
        out[k + 3] = cp.blocks[b].kappa_tau;
      }
    }
  }

  fit.rhat.resize(dim);
  fit.ess.resize(dim);
  const bool diagnosable = raw.n_draws >= 4;
  for (std::size_t k = 0; k < dim; ++k) {
    if (!diagnosable) {
      fit.rhat[k] = std::numeric_limits<double>::quiet_NaN();
      fit.ess[k] = 0;
      continue;
    }
    const auto draws = fit.coordinate(k);
    fit.rhat[k] = raw.n_chains * (raw.n_draws / 2) >= 4 ? split_rhat(draws) : std::numeric_limits<double>::quiet_NaN();
    fit.ess[k] = ess_bulk(draws);
  }

  WaicAccumulator acc(post.n_points());
  for (const auto& o : observers) acc.merge(o.acc);
  if (acc.n_draws() >= 2) fit.waic = acc.result();

  if (opts.store_pointwise) {
    fit.pointwise.assign(post.n_points(), {});
    for (const auto& chain : stored)
      for (const auto& draw : chain)
        for (std::size_t p = 0; p < draw.size(); ++p) fit.pointwise[p].push_back(draw[p]);
  }
  fit.usable = diagnosable && fit.passes_gate();
  return fit;
}

/// nuts_fit plus the usability gate: an unusable fit is re-run once with
/// target acceptance 0.95; the second result is kept and flagged.
inline FitResult nuts_fit_gated(const ModelSpec& spec, const SyntheticDataset& data, const SamplerConfig& cfg,
                                const FitOptions& opts = {}) {
  FitResult fit = nuts_fit(spec, data, cfg, opts);
  if (fit.usable) return fit;
  SamplerConfig retry = cfg;
  retry.target_accept = std::max(cfg.target_accept, kRetryTargetAccept);
  fit = nuts_fit(spec, data, retry, opts);
  fit.retried = true;
  return fit;
}

}  // namespace hbrec
