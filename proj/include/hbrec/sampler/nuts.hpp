#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "hbrec/errors.hpp"
#include "hbrec/math.hpp"
#include "hbrec/rng.hpp"

namespace hbrec {

/// A differentiable log density over R^d.
template <class T>
concept LogDensityTarget = std::copy_constructible<T> && requires(const T& t, std::span<const double> q,
                                                                   std::span<double> g) {
  { t.dimension() } -> std::convertible_to<std::size_t>;
  { t.log_density_gradient(q, g) } -> std::convertible_to<double>;
};

struct SamplerConfig {
  std::size_t n_chains = 2;
  std::size_t n_samples = 3000;  ///< iterations per chain, warmup included
  std::size_t n_warmup = 1000;
  double target_accept = 0.8;
  std::size_t max_treedepth = 10;
  std::uint64_t seed = 1;
  bool parallel_chains = false;

  // Dual averaging.
  double da_gamma = 0.05;
  double da_t0 = 10.0;
  double da_kappa = 0.75;

  void validate() const {
    if (n_chains < 1) throw UsageError("SamplerConfig: n_chains must be >= 1");
    if (!(n_warmup < n_samples)) throw UsageError("SamplerConfig: n_warmup must be < n_samples");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw UsageError("SamplerConfig: target_accept must be in (0, 1)");
    if (max_treedepth < 1) throw UsageError("SamplerConfig: max_treedepth must be >= 1");
  }

  std::size_t n_draws() const noexcept { return n_samples - n_warmup; }
};

/// Position, momentum and cached gradient/log density.
struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;
  double logp = math::kNegInf;
};

/// Dual-averaging step-size adaptation.
class StepSizeAdapter {
 public:
  StepSizeAdapter(double delta, double gamma, double t0, double kappa)
      : delta_(delta), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void restart(double step) {
    counter_ = 0;
    s_bar_ = 0;
    x_bar_ = 0;
    mu_ = std::log(10.0 * step);
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
    const double x_eta = std::pow(counter_, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar_); }

 private:
  double delta_, gamma_, t0_, kappa_;
  double counter_ = 0, s_bar_ = 0, x_bar_ = 0, mu_ = 0;
};

/// Windowed diagonal-metric adaptation: an initial fast buffer, doubling slow
/// windows that estimate per-coordinate variances, and a terminal fast buffer.
class MetricAdapter {
 public:
  MetricAdapter(std::size_t n_warmup, std::size_t dim) : n_warmup_(n_warmup), mean_(dim), m2_(dim) {
    if (init_buffer_ + term_buffer_ + base_window_ > n_warmup) {
      init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(n_warmup));
      term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(n_warmup));
      base_window_ = n_warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  /// Feeds the post-transition position; returns true when `inv_metric` was
  /// updated and the step size should be re-initialized.
  bool learn(std::span<const double> q, std::vector<double>& inv_metric) {
    if (n_warmup_ < 20) return false;
    if (in_window()) add(q);
    if (counter_ == next_window_ && counter_ != n_warmup_) {
      compute_next_window();
      const double n = n_;
      for (std::size_t i = 0; i < inv_metric.size(); ++i) {
        const double var = n > 1 ? m2_[i] / (n - 1.0) : 1.0;
        inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
      }
      n_ = 0;
      std::fill(mean_.begin(), mean_.end(), 0.0);
      std::fill(m2_.begin(), m2_.end(), 0.0);
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < n_warmup_ - term_buffer_ && counter_ != n_warmup_;
  }

  void add(std::span<const double> q) {
    ++n_;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double d = q[i] - mean_[i];
      mean_[i] += d / n_;
      m2_[i] += d * (q[i] - mean_[i]);
    }
  }

  void compute_next_window() {
    if (next_window_ == n_warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != n_warmup_ - term_buffer_ - 1) {
      const std::size_t boundary = next_window_ + 2 * window_size_;
      if (boundary >= n_warmup_ - term_buffer_) next_window_ = n_warmup_ - term_buffer_ - 1;
    }
  }

  std::size_t n_warmup_;
  std::size_t init_buffer_ = 75;
  std::size_t term_buffer_ = 50;
  std::size_t base_window_ = 25;
  std::size_t window_size_ = 0;
  std::size_t next_window_ = 0;
  std::size_t counter_ = 0;
  double n_ = 0;
  std::vector<double> mean_, m2_;
};

struct TransitionInfo {
  double accept_stat = 0;
  std::size_t depth = 0;
  std::size_t n_leapfrog = 0;
  bool divergent = false;
};

/// One NUTS chain over a diagonal Euclidean metric: multinomial sampling over
/// doubling trajectories with the generalized no-U-turn criterion checked on
/// every subtree and across subtree joins.
template <LogDensityTarget Target>
class NutsChain {
 public:
  static constexpr double kMaxDeltaH = 1000.0;

  NutsChain(Target target, std::span<const double> init, std::uint64_t seed, std::size_t max_depth)
      : target_(std::move(target)), rng_(seed), max_depth_(max_depth) {
    const std::size_t d = target_.dimension();
    if (init.size() != d) throw UsageError("NutsChain: init has wrong dimension");
    inv_metric_.assign(d, 1.0);
    z_.q.assign(init.begin(), init.end());
    z_.p.assign(d, 0.0);
    z_.grad.assign(d, 0.0);
    update_gradient(z_);
    if (!std::isfinite(z_.logp)) throw InitializationError("NutsChain: log density is not finite at the initial point");
  }

  const PhasePoint& state() const noexcept { return z_; }
  double step_size() const noexcept { return eps_; }
  void set_step_size(double eps) noexcept { eps_ = eps; }
  std::vector<double>& inv_metric() noexcept { return inv_metric_; }
  const std::vector<double>& inv_metric() const noexcept { return inv_metric_; }
  Target& target() noexcept { return target_; }

  double hamiltonian(const PhasePoint& z) const {
    double k = 0;
    for (std::size_t i = 0; i < z.p.size(); ++i) k += inv_metric_[i] * z.p[i] * z.p[i];
    return -z.logp + 0.5 * k;
  }

  void leapfrog(PhasePoint& z, double eps) const {
    const std::size_t d = z.q.size();
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * eps * z.grad[i];
    for (std::size_t i = 0; i < d; ++i) z.q[i] += eps * inv_metric_[i] * z.p[i];
    update_gradient(z);
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  }

  void sample_momentum(PhasePoint& z) {
    for (std::size_t i = 0; i < z.p.size(); ++i) z.p[i] = normal_(rng_) / std::sqrt(inv_metric_[i]);
  }

  /// Doubles or halves the step until one leapfrog step's acceptance
  /// probability crosses 0.8.
  void init_step_size() {
    const PhasePoint start = z_;
    auto delta_h = [&] {
      z_ = start;
      sample_momentum(z_);
      const double h0 = hamiltonian(z_);
      leapfrog(z_, eps_);
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = math::kInf;
      return h0 - h;
    };
    double dh = delta_h();
    const int direction = dh > std::log(0.8) ? 1 : -1;
    for (;;) {
      dh = delta_h();
      if (direction == 1 && !(dh > std::log(0.8))) break;
      if (direction == -1 && !(dh < std::log(0.8))) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7) throw FitFailure("step size search diverged to infinity", 0, 0);
      if (eps_ == 0) throw FitFailure("step size search collapsed to zero", 0, 0);
    }
    z_ = start;
  }

  TransitionInfo transition() {
    sample_momentum(z_);
    const std::size_t d = z_.q.size();
    PhasePoint z_fwd = z_, z_bck = z_;
    PhasePoint z_sample = z_, z_propose = z_;

    std::vector<double> p_sharp(d);
    sharp(z_.p, p_sharp);
    std::vector<double> p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    std::vector<double> ps_fwd_fwd = p_sharp, ps_fwd_bck = p_sharp, ps_bck_fwd = p_sharp, ps_bck_bck = p_sharp;
    std::vector<double> rho = z_.p;
    std::vector<double> rho_fwd(d), rho_bck(d), rho_ext(d);

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    TransitionInfo info;
    double sum_metro = 0.0;
    divergent_ = false;

    while (info.depth < max_depth_) {
      std::fill(rho_fwd.begin(), rho_fwd.end(), 0.0);
      std::fill(rho_bck.begin(), rho_bck.end(), 0.0);
      bool valid = false;
      double lsw_subtree = math::kNegInf;
      if (uniform01(rng_) > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        valid = build_tree(info.depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                           info.n_leapfrog, lsw_subtree, sum_metro);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        valid = build_tree(info.depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                           info.n_leapfrog, lsw_subtree, sum_metro);
        z_bck = z_;
      }
      if (!valid) break;
      ++info.depth;

      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform01(rng_) < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = math::log_sum_exp(log_sum_weight, lsw_subtree);

      for (std::size_t i = 0; i < d; ++i) rho[i] = rho_bck[i] + rho_fwd[i];
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      for (std::size_t i = 0; i < d; ++i) rho_ext[i] = rho_bck[i] + p_fwd_bck[i];
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, rho_ext);
      for (std::size_t i = 0; i < d; ++i) rho_ext[i] = rho_fwd[i] + p_bck_fwd[i];
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, rho_ext);
      if (!persist) break;
    }

    info.divergent = divergent_;
    info.accept_stat = info.n_leapfrog > 0 ? sum_metro / static_cast<double>(info.n_leapfrog) : 0.0;
    z_ = std::move(z_sample);
    return info;
  }

 private:
  void update_gradient(PhasePoint& z) const {
    z.logp = target_.log_density_gradient(z.q, z.grad);
    if (std::isnan(z.logp)) z.logp = math::kNegInf;
  }

  void sharp(const std::vector<double>& p, std::vector<double>& out) const {
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = inv_metric_[i] * p[i];
  }

  static bool criterion(const std::vector<double>& ps_minus, const std::vector<double>& ps_plus,
                        const std::vector<double>& rho) {
    double a = 0, b = 0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      a += ps_plus[i] * rho[i];
      b += ps_minus[i] * rho[i];
    }
    return a > 0 && b > 0;
  }

  bool build_tree(std::size_t depth, PhasePoint& z_propose, std::vector<double>& ps_beg, std::vector<double>& ps_end,
                  std::vector<double>& rho, std::vector<double>& p_beg, std::vector<double>& p_end, double h0,
                  double sign, std::size_t& n_leapfrog, double& log_sum_weight, double& sum_metro) {
    const std::size_t d = z_.q.size();
    if (depth == 0) {
      leapfrog(z_, sign * eps_);
      ++n_leapfrog;
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = math::kInf;
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = math::log_sum_exp(log_sum_weight, h0 - h);
      sum_metro += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      sharp(z_.p, ps_beg);
      ps_end = ps_beg;
      for (std::size_t i = 0; i < d; ++i) rho[i] += z_.p[i];
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    // Initial subtree.
    std::vector<double> p_init_end(d), ps_init_end(d), rho_init(d, 0.0);
    double lsw_init = math::kNegInf;
    if (!build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0, sign, n_leapfrog,
                    lsw_init, sum_metro))
      return false;

    // Final subtree.
    PhasePoint z_propose_final = z_;
    std::vector<double> p_final_beg(d), ps_final_beg(d), rho_final(d, 0.0);
    double lsw_final = math::kNegInf;
    if (!build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, h0, sign,
                    n_leapfrog, lsw_final, sum_metro))
      return false;

    const double lsw_subtree = math::log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = math::log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = std::move(z_propose_final);
    } else if (uniform01(rng_) < std::exp(lsw_final - lsw_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    std::vector<double> rho_subtree(d), rho_ext(d);
    for (std::size_t i = 0; i < d; ++i) {
      rho_subtree[i] = rho_init[i] + rho_final[i];
      rho[i] += rho_subtree[i];
    }
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    for (std::size_t i = 0; i < d; ++i) rho_ext[i] = rho_init[i] + p_final_beg[i];
    persist = persist && criterion(ps_beg, ps_final_beg, rho_ext);
    for (std::size_t i = 0; i < d; ++i) rho_ext[i] = rho_final[i] + p_init_end[i];
    persist = persist && criterion(ps_init_end, ps_end, rho_ext);
    return persist;
  }

  Target target_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::size_t max_depth_;
  double eps_ = 1.0;
  std::vector<double> inv_metric_;
  PhasePoint z_;
  bool divergent_ = false;
};

struct ChainStats {
  std::size_t divergences = 0;         ///< post-warmup
  std::size_t warmup_divergences = 0;
  double mean_accept = 0;              ///< post-warmup mean acceptance statistic
  double step_size = 0;
  double mean_treedepth = 0;
  std::size_t n_leapfrog = 0;          ///< all iterations
  std::size_t treedepth_hits = 0;      ///< post-warmup transitions that hit max depth
  std::vector<double> inv_metric;
};

/// Unconstrained post-warmup draws, laid out [chain][draw][coordinate].
struct NutsOutput {
  std::size_t n_chains = 0;
  std::size_t n_draws = 0;
  std::size_t dim = 0;
  std::vector<double> draws;
  std::vector<std::uint8_t> divergent;  ///< [chain][draw]
  std::vector<ChainStats> chains;

  std::span<const double> draw(std::size_t chain, std::size_t i) const {
    return {draws.data() + (chain * n_draws + i) * dim, dim};
  }

  /// All draws of one coordinate, chain by chain.
  std::vector<std::vector<double>> coordinate(std::size_t k) const {
    std::vector<std::vector<double>> out(n_chains, std::vector<double>(n_draws));
    for (std::size_t c = 0; c < n_chains; ++c)
      for (std::size_t i = 0; i < n_draws; ++i) out[c][i] = draws[(c * n_draws + i) * dim + k];
    return out;
  }

  std::size_t total_divergences() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += c.divergences;
    return n;
  }
};

struct NoDrawObserver {
  void operator()(std::span<const double>) {}
};

/// Runs one chain to completion: warmup with step-size and metric adaptation,
/// then `n_draws` retained transitions written to `out`.
template <LogDensityTarget Target, class Observer>
ChainStats run_chain(const Target& target, std::span<const double> init, const SamplerConfig& cfg,
                     std::uint64_t seed, std::span<double> out, std::span<std::uint8_t> divergent,
                     Observer& observer) {
  NutsChain<Target> chain(target, init, seed, cfg.max_treedepth);
  const std::size_t dim = target.dimension();
  ChainStats stats;
  chain.init_step_size();
  StepSizeAdapter step(cfg.target_accept, cfg.da_gamma, cfg.da_t0, cfg.da_kappa);
  step.restart(chain.step_size());
  MetricAdapter metric(cfg.n_warmup, dim);

  for (std::size_t it = 0; it < cfg.n_warmup; ++it) {
    const auto t = chain.transition();
    stats.n_leapfrog += t.n_leapfrog;
    if (t.divergent) ++stats.warmup_divergences;
    chain.set_step_size(step.learn(t.accept_stat));
    if (metric.learn(chain.state().q, chain.inv_metric())) {
      chain.init_step_size();
      step.restart(chain.step_size());
    }
  }
  if (cfg.n_warmup > 0) {
    if (stats.warmup_divergences == cfg.n_warmup)
      throw FitFailure("every warmup transition diverged", stats.warmup_divergences, cfg.n_warmup);
    chain.set_step_size(step.final_step());
  }

  double accept_sum = 0, depth_sum = 0;
  const std::size_t n_draws = cfg.n_draws();
  for (std::size_t i = 0; i < n_draws; ++i) {
    const auto t = chain.transition();
    stats.n_leapfrog += t.n_leapfrog;
    accept_sum += t.accept_stat;
    depth_sum += static_cast<double>(t.depth);
    if (t.depth >= cfg.max_treedepth) ++stats.treedepth_hits;
    if (t.divergent) ++stats.divergences;
    divergent[i] = t.divergent ? 1 : 0;
    const auto& q = chain.state().q;
    std::copy(q.begin(), q.end(), out.begin() + static_cast<std::ptrdiff_t>(i * dim));
    observer(std::span<const double>(q));
  }
  stats.mean_accept = n_draws ? accept_sum / static_cast<double>(n_draws) : 0.0;
  stats.mean_treedepth = n_draws ? depth_sum / static_cast<double>(n_draws) : 0.0;
  stats.step_size = chain.step_size();
  stats.inv_metric = chain.inv_metric();
  return stats;
}

/// Runs `cfg.n_chains` chains from the given starting points. Chain c uses an
/// RNG stream derived from (seed, c); results are identical whether chains run
/// sequentially or on separate threads. `observers`, when given, must hold one
/// observer per chain; each sees its chain's retained draws in order.
template <LogDensityTarget Target, class Observer = NoDrawObserver>
NutsOutput nuts_sample(const Target& target, const std::vector<std::vector<double>>& inits, const SamplerConfig& cfg,
                       std::vector<Observer>* observers = nullptr) {
  cfg.validate();
  if (inits.size() != cfg.n_chains) throw UsageError("nuts_sample: need one initial point per chain");
  NutsOutput out;
  out.n_chains = cfg.n_chains;
  out.n_draws = cfg.n_draws();
  out.dim = target.dimension();
  out.draws.assign(out.n_chains * out.n_draws * out.dim, 0.0);
  out.divergent.assign(out.n_chains * out.n_draws, 0);
  out.chains.resize(out.n_chains);

  std::vector<Observer> local;
  if (!observers) {
    local.resize(cfg.n_chains);
    observers = &local;
  }
  if (observers->size() != cfg.n_chains) throw UsageError("nuts_sample: need one observer per chain");

  std::vector<std::exception_ptr> errors(cfg.n_chains);
  auto run = [&](std::size_t c) {
    try {
      const std::span<double> slice(out.draws.data() + c * out.n_draws * out.dim, out.n_draws * out.dim);
      const std::span<std::uint8_t> div(out.divergent.data() + c * out.n_draws, out.n_draws);
      out.chains[c] = run_chain(target, inits[c], cfg, derive_seed(cfg.seed, {0x6e757473ULL, c}), slice, div,
                                (*observers)[c]);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (cfg.parallel_chains && cfg.n_chains > 1) {
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < cfg.n_chains; ++c) threads.emplace_back(run, c);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t c = 0; c < cfg.n_chains; ++c) run(c);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace hbrec
