#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hbrec/errors.hpp"
#include "hbrec/math.hpp"

namespace hbrec {

struct WaicResult {
  double waic = 0;
  double lppd = 0;
  double p_waic = 0;
};

/// WAIC from pointwise log-likelihood draws laid out [point][draw]:
///   lppd = sum_i log mean_s exp(ll_is), p_waic = sum_i var_s(ll_is),
///   waic = -2 (lppd - p_waic).
inline WaicResult waic(const std::vector<std::vector<double>>& loglik) {
  WaicResult r;
  for (std::size_t i = 0; i < loglik.size(); ++i) {
    const auto& ll = loglik[i];
    if (ll.size() < 2) throw UsageError("waic: need at least 2 draws per data point");
    for (double x : ll)
      if (!std::isfinite(x)) throw DegenerateInputError("waic: non-finite log-likelihood at data point " + std::to_string(i));
    r.lppd += math::log_sum_exp(ll) - std::log(static_cast<double>(ll.size()));
    r.p_waic += math::variance(ll);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

/// Streaming equivalent of waic(): feeds one draw of all points at a time,
/// keeping a running log-sum-exp and Welford moments per point.
class WaicAccumulator {
 public:
  WaicAccumulator() = default;
  explicit WaicAccumulator(std::size_t n_points)
      : max_(n_points, math::kNegInf), sum_(n_points, 0.0), mean_(n_points, 0.0), m2_(n_points, 0.0) {}

  std::size_t n_points() const noexcept { return max_.size(); }
  std::size_t n_draws() const noexcept { return n_; }

  void add(std::span<const double> ll) {
    if (ll.size() != max_.size()) throw UsageError("WaicAccumulator: wrong number of points");
    ++n_;
    const double n = static_cast<double>(n_);
    for (std::size_t i = 0; i < ll.size(); ++i) {
      const double x = ll[i];
      if (!std::isfinite(x)) {
        bad_point_ = std::min(bad_point_, i);
        continue;
      }
      if (x > max_[i]) {
        sum_[i] = sum_[i] * std::exp(max_[i] - x) + 1.0;
        max_[i] = x;
      } else {
        sum_[i] += std::exp(x - max_[i]);
      }
      const double d = x - mean_[i];
      mean_[i] += d / n;
      m2_[i] += d * (x - mean_[i]);
    }
  }

  /// Combines another accumulator's draws into this one.
  void merge(const WaicAccumulator& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
    for (std::size_t i = 0; i < max_.size(); ++i) {
      const double m = std::max(max_[i], o.max_[i]);
      sum_[i] = sum_[i] * std::exp(max_[i] - m) + o.sum_[i] * std::exp(o.max_[i] - m);
      max_[i] = m;
      const double d = o.mean_[i] - mean_[i];
      mean_[i] += d * nb / (na + nb);
      m2_[i] += o.m2_[i] + d * d * na * nb / (na + nb);
    }
    n_ += o.n_;
    bad_point_ = std::min(bad_point_, o.bad_point_);
  }

  WaicResult result() const {
    if (n_ < 2) throw UsageError("waic: need at least 2 draws per data point");
    if (bad_point_ != kNone)
      throw DegenerateInputError("waic: non-finite log-likelihood at data point " + std::to_string(bad_point_));
    WaicResult r;
    const double n = static_cast<double>(n_);
    for (std::size_t i = 0; i < max_.size(); ++i) {
      r.lppd += max_[i] + std::log(sum_[i]) - std::log(n);
      r.p_waic += m2_[i] / (n - 1.0);
    }
    r.waic = -2.0 * (r.lppd - r.p_waic);
    return r;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<double> max_, sum_, mean_, m2_;
  std::size_t n_ = 0;
  std::size_t bad_point_ = kNone;
};

}  // namespace hbrec
