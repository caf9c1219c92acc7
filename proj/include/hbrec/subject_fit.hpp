#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "hbrec/likelihood.hpp"
#include "hbrec/math.hpp"

namespace hbrec {

struct SubjectMle {
  double alpha;
  double tau;
  double loglik;
};

namespace detail {

inline constexpr double kMleBound = 9.21;  // logit(1 - 1e-4)

struct MleEval {
  double value;
  std::array<double, 2> grad;
};

inline MleEval mle_eval(std::span<const int> choices, std::span<const int> rewards, std::size_t n_arms, double v0,
                        const std::array<double, 2>& u) {
  const double a = math::logistic(u[0]);
  const double t = math::logistic(u[1]);
  const auto r = subject_loglik<true>(choices, rewards, n_arms, v0, a, t);
  return {r.value, {r.d_alpha * a * (1.0 - a), r.d_tau * t * (1.0 - t)}};
}

inline std::array<double, 2> clamp_box(std::array<double, 2> u) {
  for (double& x : u) x = std::clamp(x, -kMleBound, kMleBound);
  return u;
}

}  // namespace detail

/// Maximum-likelihood (alpha, tau) for one subject: coarse grid search, then
/// box-projected BFGS ascent in logit space.
inline SubjectMle fit_subject_mle(std::span<const int> choices, std::span<const int> rewards, std::size_t n_arms,
                                  double v0) {
  if (choices.empty()) return {0.5, 0.5, 0.0};
  static constexpr std::array<double, 9> kAlphaGrid = {0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95};
  static constexpr std::array<double, 8> kTauGrid = {0.01, 0.03, 0.06, 0.1, 0.2, 0.35, 0.6, 0.95};

  std::array<double, 2> u{0.0, 0.0};
  double best = math::kNegInf;
  for (double a : kAlphaGrid) {
    for (double t : kTauGrid) {
      const double v = subject_loglik<false>(choices, rewards, n_arms, v0, a, t).value;
      if (v > best) {
        best = v;
        u = {math::logit(a), math::logit(t)};
      }
    }
  }

  auto cur = detail::mle_eval(choices, rewards, n_arms, v0, u);
  // Inverse Hessian approximation of the negated objective.
  std::array<double, 4> h = {1.0, 0.0, 0.0, 1.0};
  for (int iter = 0; iter < 100; ++iter) {
    const std::array<double, 2> dir = {h[0] * cur.grad[0] + h[1] * cur.grad[1],
                                       h[2] * cur.grad[0] + h[3] * cur.grad[1]};
    double step = 1.0;
    std::array<double, 2> nu{};
    detail::MleEval next{};
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls) {
      nu = detail::clamp_box({u[0] + step * dir[0], u[1] + step * dir[1]});
      next = detail::mle_eval(choices, rewards, n_arms, v0, nu);
      if (std::isfinite(next.value) && next.value >= cur.value) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    const std::array<double, 2> s = {nu[0] - u[0], nu[1] - u[1]};
    // y is the change in the gradient of the minimized (negated) objective.
    const std::array<double, 2> y = {cur.grad[0] - next.grad[0], cur.grad[1] - next.grad[1]};
    const double gain = next.value - cur.value;
    u = nu;
    cur = next;
    const double sy = s[0] * y[0] + s[1] * y[1];
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const std::array<double, 2> hy = {h[0] * y[0] + h[1] * y[1], h[2] * y[0] + h[3] * y[1]};
      const double yhy = y[0] * hy[0] + y[1] * hy[1];
      const double f = (1.0 + rho * yhy) * rho;
      h[0] += f * s[0] * s[0] - rho * (hy[0] * s[0] + s[0] * hy[0]);
      h[1] += f * s[0] * s[1] - rho * (hy[0] * s[1] + s[0] * hy[1]);
      h[2] += f * s[1] * s[0] - rho * (hy[1] * s[0] + s[1] * hy[0]);
      h[3] += f * s[1] * s[1] - rho * (hy[1] * s[1] + s[1] * hy[1]);
    } else {
      h = {1.0, 0.0, 0.0, 1.0};
    }
    if (gain < 1e-10 && std::abs(s[0]) + std::abs(s[1]) < 1e-8) break;
  }
  return {math::logistic(u[0]), math::logistic(u[1]), cur.value};
}

}  // namespace hbrec
