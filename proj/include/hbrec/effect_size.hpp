#pragma once

#include <cmath>
#include <span>

#include "hbrec/errors.hpp"
#include "hbrec/math.hpp"

namespace hbrec {

/// Pooled standard deviation of two samples.
inline double pooled_sd(std::span<const double> a, std::span<const double> b) {
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  return std::sqrt(((na - 1.0) * math::variance(a) + (nb - 1.0) * math::variance(b)) / (na + nb - 2.0));
}

/// Cohen's d = (mean_a - mean_b) / pooled SD.
inline double cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw UsageError("cohens_d: each group needs at least 2 values");
  const double s = pooled_sd(a, b);
  if (!(s > 0.0)) throw DegenerateInputError("cohens_d: pooled standard deviation is zero");
  return (math::mean(a) - math::mean(b)) / s;
}

}  // namespace hbrec
