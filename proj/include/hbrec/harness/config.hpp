#pragma once

#include <cmath>
#include <cstdlib>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbrec/bandit_env.hpp"
#include "hbrec/dataset.hpp"
#include "hbrec/harness/toml_lite.hpp"
#include "hbrec/sampler/nuts.hpp"

namespace hbrec::harness {

struct Perturbation {
  std::size_t n_subjects = 50;  ///< per group
  std::size_t n_trials = 200;

  std::string label() const { return std::to_string(n_subjects) + "x" + std::to_string(n_trials); }
  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

inline std::vector<Perturbation> standard_perturbations() { return {{50, 200}, {15, 200}, {50, 40}, {15, 40}}; }

/// Everything that determines a run's outputs, plus where and how wide to run.
struct RunConfig {
  std::string profile = "desk";

  // grid
  std::vector<double> case_modes = default_case_modes();
  std::vector<double> concentrations = {3.0, 30.0};
  PairingRule pairing;
  std::size_t resamples = 20;

  // data
  std::size_t n_subjects = 50;  ///< per group, before perturbation
  std::size_t n_trials = 200;
  BetaSpec tau_spec{0.15, 30.0};
  double tolerance = 0.02;
  std::size_t max_attempts = 10000;
  std::size_t window_stride = 20;
  RovingBanditConfig env;
  std::vector<Perturbation> perturbations = standard_perturbations();

  SamplerConfig sampler;
  double alpha_level = 0.05;
  std::size_t n_bootstrap = 2000;

  // not part of the result fingerprint
  std::string output_dir = "hbrec_runs/desk";
  std::uint64_t seed = 20240601;
  std::size_t jobs = 1;
  bool keep_draws = false;

  std::vector<GridCell> grid() const { return build_grid(case_modes, concentrations, pairing); }

  void validate() const {
    if (resamples < 1) throw ConfigError("resamples must be >= 1");
    if (perturbations.empty()) throw ConfigError("perturbation list is empty");
    if (case_modes.empty() || concentrations.empty()) throw ConfigError("grid needs at least one mode and concentration");
    if (n_subjects < 2) throw ConfigError("n_subjects must be >= 2");
    if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (window_stride < 1) throw ConfigError("window_stride must be >= 1");
    if (!(alpha_level > 0 && alpha_level < 1)) throw ConfigError("alpha_level must lie in (0, 1)");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& p : perturbations) {
      if (p.n_subjects < 2 || p.n_subjects > n_subjects)
        throw ConfigError("perturbation " + p.label() + ": subjects per group must lie in [2, " +
                          std::to_string(n_subjects) + "]");
      if (p.n_trials < 1 || p.n_trials > n_trials)
        throw ConfigError("perturbation " + p.label() + ": trials must lie in [1, " + std::to_string(n_trials) + "]");
      if (!seen.insert({p.n_subjects, p.n_trials}).second) throw ConfigError("duplicate perturbation " + p.label());
    }
    try {
      for (double m : case_modes) BetaSpec(m, 3.0);
      BetaSpec(pairing.control_mode, 3.0);
      for (double k : concentrations) BetaSpec(0.5, k);
      env.validate();
      sampler.validate();
    } catch (const UsageError& e) {
      throw ConfigError(e.what());
    }
  }

  /// Dataset config of grid cell `cell`, resample `r`.
  DatasetConfig dataset_config(std::size_t cell, std::size_t r) const {
    const auto cells = grid();
    const GridCell& g = cells.at(cell);
    DatasetConfig c{GroupSpec{g.case_alpha, tau_spec, n_subjects, Group::Case},
                    GroupSpec{g.control_alpha, tau_spec, n_subjects, Group::Control}};
    c.n_trials = n_trials;
    c.env = env;
    c.env.seed = derive_seed(seed, {0x656e76ULL});
    c.resample_id = r;
    c.resample_count = resamples;
    c.seed = derive_seed(seed, {0x64617461ULL, cell});
    c.tolerance = tolerance;
    c.max_attempts = max_attempts;
    return c;
  }

  /// Result-determining settings; a resumed run must match this exactly.
  nlohmann::json fingerprint() const {
    nlohmann::json j;
    j["case_modes"] = case_modes;
    j["concentrations"] = concentrations;
    j["pairing"] = pairing.kind == PairingRule::Kind::FixedControl ? "fixed-control" : "cartesian";
    j["control_mode"] = pairing.control_mode;
    j["resamples"] = resamples;
    j["n_subjects"] = n_subjects;
    j["n_trials"] = n_trials;
    j["tau"] = {tau_spec.mode(), tau_spec.concentration()};
    j["tolerance"] = tolerance;
    j["max_attempts"] = max_attempts;
    j["window_stride"] = window_stride;
    j["env"] = {{"p_init", env.p_init}, {"drift_sd", env.drift_sd}, {"p_lo", env.p_lo}, {"p_hi", env.p_hi}};
    nlohmann::json pert = nlohmann::json::array();
    for (const auto& p : perturbations) pert.push_back({p.n_subjects, p.n_trials});
    j["perturbations"] = pert;
    j["sampler"] = {{"chains", sampler.n_chains},           {"samples", sampler.n_samples},
                    {"warmup", sampler.n_warmup},           {"target_accept", sampler.target_accept},
                    {"max_treedepth", sampler.max_treedepth}};
    j["alpha_level"] = alpha_level;
    j["bootstrap"] = n_bootstrap;
    j["seed"] = seed;
    return j;
  }
};

/// Desk-scale: 6 separations x concentrations {3, 30}, 20 resamples, and a
/// shortened sampler (2 chains x 1500 iterations, 500 warmup).
inline RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  c.sampler.n_chains = 2;
  c.sampler.n_samples = 1500;
  c.sampler.n_warmup = 500;
  c.output_dir = "hbrec_runs/desk";
  return c;
}

/// Full grid: 36 configs x 1000 resamples, 2 chains x 3000 iterations (1000 warmup).
inline RunConfig paper_profile() {
  RunConfig c;
  c.profile = "paper";
  c.concentrations = paper_concentrations();
  c.resamples = 1000;
  c.sampler.n_chains = 2;
  c.sampler.n_samples = 3000;
  c.sampler.n_warmup = 1000;
  c.output_dir = "hbrec_runs/paper";
  return c;
}

inline RunConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

namespace detail {

inline double as_number(const TomlValue& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key + ": expected a number");
  return std::get<double>(v.v);
}

inline std::size_t as_count(const TomlValue& v, const std::string& key) {
  const double x = as_number(v, key);
  if (!(x >= 0) || x != std::floor(x) || x > 1e15) throw ConfigError(key + ": expected a non-negative integer");
  return static_cast<std::size_t>(x);
}

inline std::string as_string(const TomlValue& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + ": expected a string");
  return std::get<std::string>(v.v);
}

inline bool as_bool(const TomlValue& v, const std::string& key) {
  if (!v.is_bool()) throw ConfigError(key + ": expected true or false");
  return std::get<bool>(v.v);
}

inline std::vector<double> as_numbers(const TomlValue& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : std::get<std::vector<TomlValue>>(v.v)) out.push_back(as_number(x, key));
  return out;
}

inline std::vector<Perturbation> as_perturbations(const TomlValue& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key + ": expected an array of [subjects, trials] pairs");
  std::vector<Perturbation> out;
  for (const auto& x : std::get<std::vector<TomlValue>>(v.v)) {
    if (!x.is_array() || std::get<std::vector<TomlValue>>(x.v).size() != 2)
      throw ConfigError(key + ": each perturbation is a [subjects, trials] pair");
    const auto& pair = std::get<std::vector<TomlValue>>(x.v);
    out.push_back({as_count(pair[0], key), as_count(pair[1], key)});
  }
  return out;
}

}  // namespace detail

/// Applies a parsed document on top of `base`. Unknown keys are errors.
inline void apply_toml(RunConfig& c, const TomlTable& t) {
  using namespace detail;
  for (const auto& [key, v] : t) {
    if (key == "profile") continue;  // handled by load_config
    if (key == "seed") c.seed = as_count(v, key);
    else if (key == "output_dir") c.output_dir = as_string(v, key);
    else if (key == "jobs") c.jobs = as_count(v, key);
    else if (key == "grid.case_modes") c.case_modes = as_numbers(v, key);
    else if (key == "grid.concentrations") c.concentrations = as_numbers(v, key);
    else if (key == "grid.control_mode") c.pairing.control_mode = as_number(v, key);
    else if (key == "grid.pairing") {
      const auto s = as_string(v, key);
      if (s == "fixed-control") c.pairing.kind = PairingRule::Kind::FixedControl;
      else if (s == "cartesian") c.pairing.kind = PairingRule::Kind::Cartesian;
      else throw ConfigError(key + ": expected \"fixed-control\" or \"cartesian\"");
    } else if (key == "grid.resamples") c.resamples = as_count(v, key);
    else if (key == "data.n_subjects") c.n_subjects = as_count(v, key);
    else if (key == "data.n_trials") c.n_trials = as_count(v, key);
    else if (key == "data.tau_mode" || key == "data.tau_concentration") {
      const double m = key == "data.tau_mode" ? as_number(v, key) : c.tau_spec.mode();
      const double k = key == "data.tau_concentration" ? as_number(v, key) : c.tau_spec.concentration();
      try {
        c.tau_spec = BetaSpec(m, k);
      } catch (const UsageError& e) {
        throw ConfigError(key + ": " + e.what());
      }
    } else if (key == "data.tolerance") c.tolerance = as_number(v, key);
    else if (key == "data.max_attempts") c.max_attempts = as_count(v, key);
    else if (key == "data.window_stride") c.window_stride = as_count(v, key);
    else if (key == "data.perturbations") c.perturbations = as_perturbations(v, key);
    else if (key == "data.drift_sd") c.env.drift_sd = as_number(v, key);
    else if (key == "data.p_lo") c.env.p_lo = as_number(v, key);
    else if (key == "data.p_hi") c.env.p_hi = as_number(v, key);
    else if (key == "data.p_init") {
      c.env.p_init = as_numbers(v, key);
      c.env.n_arms = c.env.p_init.size();
    } else if (key == "sampler.chains") c.sampler.n_chains = as_count(v, key);
    else if (key == "sampler.samples") c.sampler.n_samples = as_count(v, key);
    else if (key == "sampler.warmup") c.sampler.n_warmup = as_count(v, key);
    else if (key == "sampler.target_accept") c.sampler.target_accept = as_number(v, key);
    else if (key == "sampler.max_treedepth") c.sampler.max_treedepth = as_count(v, key);
    else if (key == "analysis.alpha_level") c.alpha_level = as_number(v, key);
    else if (key == "analysis.bootstrap") c.n_bootstrap = as_count(v, key);
    else if (key == "output.keep_draws") c.keep_draws = as_bool(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

/// HBREC_OUTPUT_DIR and HBREC_JOBS override the file.
inline void apply_env(RunConfig& c) {
  if (const char* dir = std::getenv("HBREC_OUTPUT_DIR"); dir && *dir) c.output_dir = dir;
  if (const char* jobs = std::getenv("HBREC_JOBS"); jobs && *jobs) {
    char* end = nullptr;
    const long n = std::strtol(jobs, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("HBREC_JOBS must be a positive integer");
    c.jobs = static_cast<std::size_t>(n);
  }
}

/// Profile (explicit argument, else the file's `profile` key, else desk),
/// then the file, then environment overrides.
inline RunConfig load_config(const std::optional<std::string>& path, const std::optional<std::string>& profile) {
  TomlTable table;
  if (path) table = parse_toml_file(*path);
  std::string name = "desk";
  if (auto it = table.find("profile"); it != table.end()) name = detail::as_string(it->second, "profile");
  if (profile) name = *profile;
  RunConfig c = profile_by_name(name);
  apply_toml(c, table);
  apply_env(c);
  c.validate();
  return c;
}

}  // namespace hbrec::harness
