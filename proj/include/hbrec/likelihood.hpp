#pragma once

#include <array>
#include <cmath>
#include <span>

#include "hbrec/errors.hpp"
#include "hbrec/math.hpp"

namespace hbrec {

inline constexpr std::size_t kMaxArms = 16;

struct SubjectLoglik {
  double value = 0.0;
  double d_alpha = 0.0;  ///< d value / d alpha
  double d_tau = 0.0;    ///< d value / d tau
};

/// Log-likelihood of one subject's recorded choices, replaying the value
/// updates on the observed rewards. With `Gradient`, derivatives w.r.t. alpha
/// and tau are carried through the recursion via the sensitivities dV/dalpha.
/// When `pointwise` is non-empty, it receives log p(choice_t) per trial.
template <bool Gradient>
SubjectLoglik subject_loglik(std::span<const int> choices, std::span<const int> rewards, std::size_t n_arms,
                             double v0, double alpha, double tau, std::span<double> pointwise = {}) {
  SubjectLoglik out;
  const std::size_t n = choices.size();
  const double inv_tau = 1.0 / tau;
  const bool record = !pointwise.empty();

  if (n_arms == 2) {
    double v[2] = {v0, v0};
    double s[2] = {0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      const int c = choices[t];
      const int o = 1 - c;
      const double dv = v[c] - v[o];
      const double z = dv * inv_tau;
      // one exp serves both log p(choice) and p(other)
      const double e = std::exp(-std::abs(z));
      const double lp = std::min(z, 0.0) - std::log1p(e);
      out.value += lp;
      if (record) pointwise[t] = lp;
      if constexpr (Gradient) {
        const double p_other = (z >= 0 ? e : 1.0) / (1.0 + e);
        out.d_alpha += p_other * (s[c] - s[o]) * inv_tau;
        out.d_tau -= p_other * dv * inv_tau * inv_tau;
      }
      const double delta = rewards[t] - v[c];
      if constexpr (Gradient) s[c] = s[c] * (1.0 - alpha) + delta;
      v[c] += alpha * delta;
    }
    return out;
  }

  if (n_arms > kMaxArms || n_arms < 2) throw UsageError("subject_loglik: unsupported arm count");
  std::array<double, kMaxArms> v{};
  std::array<double, kMaxArms> s{};
  std::array<double, kMaxArms> p{};
  v.fill(v0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto c = static_cast<std::size_t>(choices[t]);
    double zmax = v[0] * inv_tau;
    for (std::size_t a = 1; a < n_arms; ++a) zmax = std::max(zmax, v[a] * inv_tau);
    double total = 0.0;
    for (std::size_t a = 0; a < n_arms; ++a) {
      p[a] = std::exp(v[a] * inv_tau - zmax);
      total += p[a];
    }
    const double lp = v[c] * inv_tau - zmax - std::log(total);
    out.value += lp;
    if (record) pointwise[t] = lp;
    if constexpr (Gradient) {
      double es = 0.0, ev = 0.0;
      for (std::size_t a = 0; a < n_arms; ++a) {
        p[a] /= total;
        es += p[a] * s[a];
        ev += p[a] * v[a];
      }
      out.d_alpha += (s[c] - es) * inv_tau;
      out.d_tau -= (v[c] - ev) * inv_tau * inv_tau;
    }
    const double delta = rewards[t] - v[c];
    if constexpr (Gradient) s[c] = s[c] * (1.0 - alpha) + delta;
    v[c] += alpha * delta;
  }
  return out;
}

}  // namespace hbrec
