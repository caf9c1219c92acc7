#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>

namespace hbrec::math {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double logistic(double u) noexcept {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

/// log(logistic(u)), accurate in both tails.
inline double log_logistic(double u) noexcept {
  return u >= 0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u));
}

inline double log_sum_exp(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double log_sum_exp(std::span<const double> xs) noexcept {
  if (xs.empty()) return kNegInf;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf || !std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double mean(std::span<const double> xs) noexcept {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample variance (n - 1 denominator).
inline double variance(std::span<const double> xs) noexcept {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

inline double sd(std::span<const double> xs) noexcept { return std::sqrt(variance(xs)); }

/// Pearson correlation; NaN when either input has zero variance.
inline double pearson(std::span<const double> x, std::span<const double> y) noexcept {
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace hbrec::math
