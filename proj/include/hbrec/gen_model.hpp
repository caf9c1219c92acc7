#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hbrec/bandit_env.hpp"
#include "hbrec/beta_spec.hpp"
#include "hbrec/errors.hpp"
#include "hbrec/rng.hpp"

namespace hbrec {

inline constexpr double kDefaultInitialValue = 0.5;
inline constexpr double kSimulationTemperatureFloor = 1e-3;

/// Expected value per arm, V(s).
struct ValueState {
  std::vector<double> values;
  double v0 = kDefaultInitialValue;

  static ValueState initial(std::size_t n_arms, double v0 = kDefaultInitialValue) {
    return {std::vector<double>(n_arms, v0), v0};
  }

  std::size_t n_arms() const noexcept { return values.size(); }
  friend bool operator==(const ValueState&, const ValueState&) = default;
};

/// Rescorla-Wagner update of the chosen arm: V += alpha * (r - V).
inline ValueState q_update(ValueState state, std::size_t chosen_arm, double reward, double alpha) {
  if (chosen_arm >= state.values.size())
    throw UsageError("q_update: arm " + std::to_string(chosen_arm) + " out of range");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("q_update: alpha must lie in [0, 1]");
  double& v = state.values[chosen_arm];
  v += alpha * (reward - v);
  return state;
}

/// Softmax with temperature: p(a) proportional to exp(V(a) / tau).
inline std::vector<double> choice_probabilities(const ValueState& state, double tau) {
  if (!(tau > 0.0)) throw UsageError("choice_probabilities: tau must be > 0");
  const auto& v = state.values;
  const double vmax = *std::max_element(v.begin(), v.end());
  std::vector<double> p(v.size());
  double total = 0.0;
  for (std::size_t a = 0; a < v.size(); ++a) {
    p[a] = std::exp((v[a] - vmax) / tau);
    total += p[a];
  }
  for (double& x : p) x /= total;
  return p;
}

struct SubjectHistory {
  std::vector<int> choices;
  std::vector<int> rewards;

  friend bool operator==(const SubjectHistory&, const SubjectHistory&) = default;
};

inline SubjectHistory simulate_subject(const SubjectParams& params, const EnvTrace& trace, std::size_t n_trials,
                                       std::uint64_t seed, double v0 = kDefaultInitialValue) {
  if (n_trials < 1) throw UsageError("simulate_subject: n_trials must be >= 1");
  if (n_trials > trace.n_trials()) throw UsageError("simulate_subject: trace shorter than n_trials");
  Rng rng(seed);
  const double tau = std::max(params.temperature(), kSimulationTemperatureFloor);
  ValueState state = ValueState::initial(trace.n_arms(), v0);
  SubjectHistory h;
  h.choices.reserve(n_trials);
  h.rewards.reserve(n_trials);
  for (std::size_t t = 0; t < n_trials; ++t) {
    const auto p = choice_probabilities(state, tau);
    const double u = uniform01(rng);
    std::size_t arm = p.size() - 1;
    double cum = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      cum += p[a];
      if (u < cum) {
        arm = a;
        break;
      }
    }
    const int r = draw_reward(trace, t, arm, rng);
    state = q_update(std::move(state), arm, r, params.learning_rate());
    h.choices.push_back(static_cast<int>(arm));
    h.rewards.push_back(r);
  }
  return h;
}

}  // namespace hbrec
