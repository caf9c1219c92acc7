#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "hbrec/bandit_env.hpp"
#include "hbrec/beta_spec.hpp"
#include "hbrec/effect_size.hpp"
#include "hbrec/errors.hpp"
#include "hbrec/gen_model.hpp"
#include "hbrec/math.hpp"
#include "hbrec/rng.hpp"
#include "hbrec/subject_fit.hpp"

namespace hbrec {

enum class Group { Case = 0, Control = 1 };

inline const char* to_string(Group g) noexcept { return g == Group::Case ? "case" : "control"; }

inline Group group_from_string(const std::string& s) {
  if (s == "case") return Group::Case;
  if (s == "control") return Group::Control;
  throw UsageError("unknown group label '" + s + "'");
}

struct GroupSpec {
  BetaSpec alpha_spec;
  BetaSpec tau_spec;
  std::size_t n_subjects = 2;
  Group label = Group::Case;

  void validate() const {
    if (n_subjects < 2) throw UsageError("GroupSpec: n_subjects must be >= 2");
  }
  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

/// Which pair of group priors a grid cell uses.
struct GridCell {
  BetaSpec case_alpha;
  BetaSpec control_alpha;

  /// True when the generating alpha distributions differ. A concentration
  /// of 2 is uniform regardless of mode.
  bool truth_differs() const noexcept {
    if (case_alpha.concentration() != control_alpha.concentration()) return true;
    return case_alpha.mode() != control_alpha.mode() && case_alpha.concentration() > 2.0;
  }
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct PairingRule {
  enum class Kind {
    FixedControl,  ///< control mode fixed; each listed mode is a case mode
    Cartesian,     ///< every (case mode, control mode) pair from the list
  };
  Kind kind = Kind::FixedControl;
  double control_mode = 0.3;
};

inline const std::vector<double>& default_case_modes() {
  static const std::vector<double> modes = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  return modes;
}

inline const std::vector<double>& paper_concentrations() {
  static const std::vector<double> conc = {2.0, 2.5, 3.0, 5.0, 10.0, 30.0};
  return conc;
}

/// Grid cells in concentration-major order.
inline std::vector<GridCell> build_grid(const std::vector<double>& mode_values, const std::vector<double>& concentrations,
                                        const PairingRule& rule = {}) {
  if (mode_values.empty() || concentrations.empty()) throw UsageError("build_grid: empty mode or concentration list");
  std::vector<GridCell> cells;
  for (double k : concentrations) {
    if (rule.kind == PairingRule::Kind::FixedControl) {
      for (double m : mode_values) cells.push_back({BetaSpec(m, k), BetaSpec(rule.control_mode, k)});
    } else {
      for (double mc : mode_values)
        for (double mk : mode_values) cells.push_back({BetaSpec(mc, k), BetaSpec(mk, k)});
    }
  }
  return cells;
}

struct GroupSample {
  std::vector<SubjectParams> params;
  std::size_t attempts = 0;
};

namespace detail {

inline double draw_beta(const BetaShapes& s, Rng& rng) {
  const double x = std::gamma_distribution<double>(s.a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(s.b, 1.0)(rng);
  return x / (x + y);
}

}  // namespace detail

/// Mean and SD of the clamped learning rates in `params`.
inline std::pair<double, double> alpha_moments(const std::vector<SubjectParams>& params) {
  std::vector<double> a;
  a.reserve(params.size());
  for (const auto& p : params) a.push_back(p.learning_rate());
  return {math::mean(a), math::sd(a)};
}

/// True if the group's learning-rate sample mean and SD both lie within
/// `tolerance` of the generating Beta's.
inline bool passes_fidelity(const std::vector<SubjectParams>& params, const BetaSpec& alpha_spec, double tolerance) {
  const auto shapes = beta_shapes(alpha_spec);
  const auto [m, s] = alpha_moments(params);
  return std::abs(m - shapes.mean()) <= tolerance && std::abs(s - shapes.sd()) <= tolerance;
}

/// Draws a group's subject parameters, redrawing the learning rates until the
/// sample matches the generating distribution's mean and SD within tolerance.
inline GroupSample sample_group_params(const GroupSpec& spec, double tolerance, std::size_t max_attempts, Rng& rng) {
  spec.validate();
  if (!(tolerance > 0.0)) throw UsageError("sample_group_params: tolerance must be > 0");
  const auto a_shapes = beta_shapes(spec.alpha_spec);
  const auto t_shapes = beta_shapes(spec.tau_spec);
  const double target_mean = a_shapes.mean();
  const double target_sd = a_shapes.sd();

  std::vector<double> alphas(spec.n_subjects);
  double best_mean_err = math::kInf, best_sd_err = math::kInf;
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    for (double& a : alphas)
      a = std::clamp(detail::draw_beta(a_shapes, rng), SubjectParams::kClampLo, SubjectParams::kClampHi);
    const double mean_err = std::abs(math::mean(alphas) - target_mean);
    const double sd_err = std::abs(math::sd(alphas) - target_sd);
    if (mean_err <= tolerance && sd_err <= tolerance) {
      GroupSample out;
      out.attempts = attempt;
      out.params.reserve(spec.n_subjects);
      for (double a : alphas) out.params.push_back(SubjectParams::clamped(a, detail::draw_beta(t_shapes, rng)));
      return out;
    }
    if (mean_err + sd_err < best_mean_err + best_sd_err) {
      best_mean_err = mean_err;
      best_sd_err = sd_err;
    }
  }
  throw RejectionFailure(max_attempts, best_mean_err, best_sd_err);
}

struct DatasetConfig {
  DatasetConfig() = default;
  DatasetConfig(GroupSpec case_spec, GroupSpec control_spec)
      : case_group(std::move(case_spec)), control_group(std::move(control_spec)) {}

  GroupSpec case_group;
  GroupSpec control_group;
  std::size_t n_trials = 200;
  RovingBanditConfig env;
  std::size_t resample_id = 0;
  std::size_t resample_count = 1;
  std::uint64_t seed = 1;
  double tolerance = 0.02;
  std::size_t max_attempts = 10000;
  double v0 = kDefaultInitialValue;
  bool per_subject_traces = false;

  void validate() const {
    case_group.validate();
    control_group.validate();
    if (case_group.label != Group::Case || control_group.label != Group::Control)
      throw UsageError("DatasetConfig: group labels must be case / control");
    if (n_trials < 1) throw UsageError("DatasetConfig: n_trials must be >= 1");
    if (resample_id >= resample_count) throw UsageError("DatasetConfig: resample_id must be < resample_count");
    env.validate();
  }

  /// Hash of the generating distributions; keys the dataset's RNG stream.
  std::uint64_t fingerprint() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = splitmix64(h ^ bits);
    };
    for (const GroupSpec* g : {&case_group, &control_group}) {
      mix(g->alpha_spec.mode());
      mix(g->alpha_spec.concentration());
      mix(g->tau_spec.mode());
      mix(g->tau_spec.concentration());
      mix(static_cast<double>(g->n_subjects));
    }
    mix(static_cast<double>(n_trials));
    return h;
  }

  friend bool operator==(const DatasetConfig& a, const DatasetConfig& b) {
    return a.case_group == b.case_group && a.control_group == b.control_group && a.n_trials == b.n_trials &&
           a.env.n_arms == b.env.n_arms && a.env.p_init == b.env.p_init && a.env.drift_sd == b.env.drift_sd &&
           a.env.p_lo == b.env.p_lo && a.env.p_hi == b.env.p_hi && a.env.seed == b.env.seed &&
           a.resample_id == b.resample_id && a.resample_count == b.resample_count && a.seed == b.seed &&
           a.tolerance == b.tolerance && a.max_attempts == b.max_attempts && a.v0 == b.v0 &&
           a.per_subject_traces == b.per_subject_traces;
  }
};

struct SubjectRecord {
  Group group;
  std::size_t subject_id;  ///< index within its group
  SubjectParams params;
  SubjectHistory history;

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

/// Case subjects first, then controls. `traces` holds one shared trace, or
/// one per subject when the config asks for per-subject schedules.
struct SyntheticDataset {
  DatasetConfig config;
  std::vector<SubjectRecord> subjects;
  std::vector<EnvTrace> traces;
  double true_d = 0.0;
  std::size_t trial_offset = 0;  ///< start of the retained window in the original trials

  std::size_t n_subjects() const noexcept { return subjects.size(); }
  std::size_t n_trials() const noexcept { return config.n_trials; }
  std::size_t n_arms() const noexcept { return config.env.n_arms; }

  std::vector<double> true_alphas(Group g) const {
    std::vector<double> out;
    for (const auto& s : subjects)
      if (s.group == g) out.push_back(s.params.learning_rate());
    return out;
  }

  std::vector<double> true_alphas() const {
    std::vector<double> out;
    for (const auto& s : subjects) out.push_back(s.params.learning_rate());
    return out;
  }

  /// Cohen's d of the true learning rates, case minus control.
  double compute_true_d() const { return cohens_d(true_alphas(Group::Case), true_alphas(Group::Control)); }

  friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

inline SyntheticDataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  const std::uint64_t stream = derive_seed(config.seed, {config.fingerprint(), config.resample_id});
  Rng rng(derive_seed(stream, {0x706172616d73ULL}));

  SyntheticDataset ds;
  ds.config = config;
  const auto case_params = sample_group_params(config.case_group, config.tolerance, config.max_attempts, rng);
  const auto control_params = sample_group_params(config.control_group, config.tolerance, config.max_attempts, rng);

  const std::size_t n_total = config.case_group.n_subjects + config.control_group.n_subjects;
  const std::size_t n_traces = config.per_subject_traces ? n_total : 1;
  for (std::size_t i = 0; i < n_traces; ++i) {
    RovingBanditConfig env = config.env;
    env.seed = derive_seed(config.env.seed, {stream, i});
    ds.traces.push_back(generate_trace(env, config.n_trials));
  }

  std::size_t k = 0;
  for (const auto* sample : {&case_params, &control_params}) {
    const Group g = sample == &case_params ? Group::Case : Group::Control;
    for (std::size_t i = 0; i < sample->params.size(); ++i, ++k) {
      const EnvTrace& trace = ds.traces[config.per_subject_traces ? k : 0];
      const auto seed = derive_seed(stream, {static_cast<std::uint64_t>(g), i, 0x73696dULL});
      ds.subjects.push_back(
          {g, i, sample->params[i], simulate_subject(sample->params[i], trace, config.n_trials, seed, config.v0)});
    }
  }
  ds.true_d = ds.compute_true_d();
  return ds;
}

/// Chooses the start of a consecutive trial window.
using WindowSelector = std::function<std::size_t(const SyntheticDataset&, std::size_t window_len)>;

inline WindowSelector fixed_window(std::size_t start) {
  return [start](const SyntheticDataset&, std::size_t) { return start; };
}

/// Keeps the first `n_subjects` of each group and the window of `n_trials`
/// consecutive trials picked by `selector`. Histories are truncated, not
/// re-simulated.
inline SyntheticDataset perturb(const SyntheticDataset& ds, std::size_t n_subjects, std::size_t n_trials,
                                const WindowSelector& selector) {
  if (n_subjects > ds.config.case_group.n_subjects || n_subjects > ds.config.control_group.n_subjects)
    throw UsageError("perturb: requested more subjects than the dataset holds");
  if (n_subjects < 2) throw UsageError("perturb: need at least 2 subjects per group");
  if (n_trials > ds.n_trials() || n_trials < 1) throw UsageError("perturb: requested trial count out of range");
  const std::size_t start = n_trials == ds.n_trials() ? 0 : selector(ds, n_trials);
  if (start + n_trials > ds.n_trials()) throw UsageError("perturb: window exceeds trial count");

  SyntheticDataset out;
  out.config = ds.config;
  out.config.case_group.n_subjects = n_subjects;
  out.config.control_group.n_subjects = n_subjects;
  out.config.n_trials = n_trials;
  out.trial_offset = ds.trial_offset + start;
  const auto first = static_cast<std::ptrdiff_t>(start);
  const auto last = static_cast<std::ptrdiff_t>(start + n_trials);
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    const auto& s = ds.subjects[i];
    if (s.subject_id >= n_subjects) continue;
    SubjectRecord r{s.group, s.subject_id, s.params, {}};
    r.history.choices.assign(s.history.choices.begin() + first, s.history.choices.begin() + last);
    r.history.rewards.assign(s.history.rewards.begin() + first, s.history.rewards.begin() + last);
    out.subjects.push_back(std::move(r));
    if (ds.config.per_subject_traces) out.traces.push_back(ds.traces[i].window(start, n_trials));
  }
  if (!ds.config.per_subject_traces) out.traces.push_back(ds.traces.front().window(start, n_trials));
  out.true_d = out.compute_true_d();
  return out;
}

struct WindowScore {
  std::size_t start;
  double rho;
};

/// Scores every stride-spaced window by the Pearson correlation between
/// per-window maximum-likelihood learning rates and the true ones.
inline std::vector<WindowScore> score_windows(const SyntheticDataset& ds, std::size_t window_len, std::size_t stride) {
  if (window_len < 1 || window_len > ds.n_trials()) throw UsageError("score_windows: window length out of range");
  if (stride < 1) throw UsageError("score_windows: stride must be >= 1");
  const auto truth = ds.true_alphas();
  std::vector<WindowScore> scores;
  std::vector<double> est(ds.subjects.size());
  for (std::size_t start = 0; start + window_len <= ds.n_trials(); start += stride) {
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
      const auto& h = ds.subjects[i].history;
      const std::span<const int> c(h.choices.data() + start, window_len);
      const std::span<const int> r(h.rewards.data() + start, window_len);
      est[i] = fit_subject_mle(c, r, ds.n_arms(), ds.config.v0).alpha;
    }
    double rho = math::pearson(est, truth);
    if (std::isnan(rho)) rho = -math::kInf;
    scores.push_back({start, rho});
  }
  return scores;
}

inline std::size_t select_best_window(const SyntheticDataset& ds, std::size_t window_len, std::size_t stride) {
  if (window_len == ds.n_trials()) return 0;
  const auto scores = score_windows(ds, window_len, stride);
  std::size_t best = scores.front().start;
  double best_rho = scores.front().rho;
  for (const auto& s : scores) {
    if (s.rho > best_rho) {
      best_rho = s.rho;
      best = s.start;
    }
  }
  return best;
}

inline WindowSelector best_window(std::size_t stride) {
  return [stride](const SyntheticDataset& ds, std::size_t len) { return select_best_window(ds, len, stride); };
}

}  // namespace hbrec
