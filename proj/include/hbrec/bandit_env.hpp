#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "hbrec/errors.hpp"
#include "hbrec/rng.hpp"

namespace hbrec {

/// Independent reflected Gaussian random walks on each arm's reward probability.
struct RovingBanditConfig {
  std::size_t n_arms = 2;
  std::vector<double> p_init = {0.65, 0.35};
  double drift_sd = 0.05;
  double p_lo = 0.2;
  double p_hi = 0.8;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_arms < 2) throw UsageError("RovingBanditConfig: need at least 2 arms");
    if (p_init.size() != n_arms) throw UsageError("RovingBanditConfig: p_init length must equal n_arms");
    if (!(p_lo >= 0.0 && p_lo < p_hi && p_hi <= 1.0))
      throw UsageError("RovingBanditConfig: require 0 <= p_lo < p_hi <= 1");
    for (double p : p_init)
      if (!(p >= p_lo && p <= p_hi)) throw UsageError("RovingBanditConfig: p_init outside bounds");
    if (!(drift_sd >= 0.0) || !std::isfinite(drift_sd)) throw UsageError("RovingBanditConfig: drift_sd must be >= 0");
  }
};

/// Folds x back into [lo, hi] by mirror reflection at both walls. Handles
/// steps of any size.
inline double reflect_into(double x, double lo, double hi) noexcept {
  const double width = hi - lo;
  double y = std::fmod(x - lo, 2.0 * width);
  if (y < 0) y += 2.0 * width;
  if (y > width) y = 2.0 * width - y;
  return lo + y;
}

/// Materialized per-trial, per-arm reward probabilities. Immutable once built.
class EnvTrace {
 public:
  EnvTrace(std::size_t n_trials, std::size_t n_arms, std::vector<double> probs)
      : n_trials_(n_trials), n_arms_(n_arms), probs_(std::move(probs)) {
    if (probs_.size() != n_trials_ * n_arms_) throw UsageError("EnvTrace: probability buffer has wrong size");
  }

  std::size_t n_trials() const noexcept { return n_trials_; }
  std::size_t n_arms() const noexcept { return n_arms_; }

  double probability(std::size_t trial, std::size_t arm) const {
    if (trial >= n_trials_ || arm >= n_arms_)
      throw UsageError("EnvTrace: index (" + std::to_string(trial) + ", " + std::to_string(arm) + ") out of range");
    return probs_[trial * n_arms_ + arm];
  }

  const std::vector<double>& data() const noexcept { return probs_; }

  /// Consecutive rows [start, start + len).
  EnvTrace window(std::size_t start, std::size_t len) const {
    if (start + len > n_trials_) throw UsageError("EnvTrace::window: out of range");
    return EnvTrace(len, n_arms_,
                    std::vector<double>(probs_.begin() + static_cast<std::ptrdiff_t>(start * n_arms_),
                                        probs_.begin() + static_cast<std::ptrdiff_t>((start + len) * n_arms_)));
  }

  friend bool operator==(const EnvTrace&, const EnvTrace&) = default;

 private:
  std::size_t n_trials_;
  std::size_t n_arms_;
  std::vector<double> probs_;
};

inline EnvTrace generate_trace(const RovingBanditConfig& config, std::size_t n_trials) {
  config.validate();
  if (n_trials < 1) throw UsageError("generate_trace: n_trials must be >= 1");
  Rng rng(derive_seed(config.seed, {0x7472616365ULL}));
  std::normal_distribution<double> step(0.0, 1.0);
  std::vector<double> probs(n_trials * config.n_arms);
  std::vector<double> p = config.p_init;
  for (std::size_t t = 0; t < n_trials; ++t) {
    for (std::size_t a = 0; a < config.n_arms; ++a) probs[t * config.n_arms + a] = p[a];
    if (config.drift_sd > 0) {
      for (std::size_t a = 0; a < config.n_arms; ++a)
        p[a] = reflect_into(p[a] + config.drift_sd * step(rng), config.p_lo, config.p_hi);
    }
  }
  return EnvTrace(n_trials, config.n_arms, std::move(probs));
}

inline int draw_reward(const EnvTrace& trace, std::size_t trial, std::size_t arm, Rng& rng) {
  const double p = trace.probability(trial, arm);
  return uniform01(rng) < p ? 1 : 0;
}

/// CSV with header `trial,arm,probability`.
inline void write_trace_csv(const EnvTrace& trace, std::ostream& out) {
  out << "trial,arm,probability\n";
  char buf[64];
  for (std::size_t t = 0; t < trace.n_trials(); ++t) {
    for (std::size_t a = 0; a < trace.n_arms(); ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", trace.probability(t, a));
      out << t << ',' << a << ',' << buf << '\n';
    }
  }
}

}  // namespace hbrec
