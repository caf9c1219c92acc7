#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hbrec/dataset.hpp"

namespace hbrec {

inline constexpr const char* kDatasetFormat = "hbrec-dataset";
inline constexpr int kDatasetFormatVersion = 1;

namespace io {

using nlohmann::json;

inline json to_json(const BetaSpec& s) { return {{"mode", s.mode()}, {"concentration", s.concentration()}}; }
inline BetaSpec beta_from_json(const json& j) { return {j.at("mode").get<double>(), j.at("concentration").get<double>()}; }

inline json to_json(const GroupSpec& g) {
  return {{"alpha", to_json(g.alpha_spec)},
          {"tau", to_json(g.tau_spec)},
          {"n_subjects", g.n_subjects},
          {"label", to_string(g.label)}};
}

inline GroupSpec group_from_json(const json& j) {
  return {beta_from_json(j.at("alpha")), beta_from_json(j.at("tau")), j.at("n_subjects").get<std::size_t>(),
          group_from_string(j.at("label").get<std::string>())};
}

inline json to_json(const RovingBanditConfig& e) {
  return {{"n_arms", e.n_arms}, {"p_init", e.p_init}, {"drift_sd", e.drift_sd},
          {"p_lo", e.p_lo},     {"p_hi", e.p_hi},     {"seed", e.seed}};
}

inline RovingBanditConfig env_from_json(const json& j) {
  RovingBanditConfig e;
  e.n_arms = j.at("n_arms").get<std::size_t>();
  e.p_init = j.at("p_init").get<std::vector<double>>();
  e.drift_sd = j.at("drift_sd").get<double>();
  e.p_lo = j.at("p_lo").get<double>();
  e.p_hi = j.at("p_hi").get<double>();
  e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

inline json to_json(const DatasetConfig& c) {
  return {{"case", to_json(c.case_group)},
          {"control", to_json(c.control_group)},
          {"n_trials", c.n_trials},
          {"env", to_json(c.env)},
          {"resample_id", c.resample_id},
          {"resample_count", c.resample_count},
          {"seed", c.seed},
          {"tolerance", c.tolerance},
          {"max_attempts", c.max_attempts},
          {"v0", c.v0},
          {"per_subject_traces", c.per_subject_traces}};
}

inline DatasetConfig config_from_json(const json& j) {
  DatasetConfig c{group_from_json(j.at("case")), group_from_json(j.at("control"))};
  c.n_trials = j.at("n_trials").get<std::size_t>();
  c.env = env_from_json(j.at("env"));
  c.resample_id = j.at("resample_id").get<std::size_t>();
  c.resample_count = j.at("resample_count").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.tolerance = j.at("tolerance").get<double>();
  c.max_attempts = j.at("max_attempts").get<std::size_t>();
  c.v0 = j.at("v0").get<double>();
  c.per_subject_traces = j.at("per_subject_traces").get<bool>();
  return c;
}

inline json to_json(const EnvTrace& t) {
  return {{"n_trials", t.n_trials()}, {"n_arms", t.n_arms()}, {"probabilities", t.data()}};
}

inline EnvTrace trace_from_json(const json& j) {
  return {j.at("n_trials").get<std::size_t>(), j.at("n_arms").get<std::size_t>(),
          j.at("probabilities").get<std::vector<double>>()};
}

}  // namespace io

/// JSONL: one header record (config, seeds, environment schedule), then one
/// record per subject `{group, subject_id, true_alpha, true_tau, choices, rewards}`.
/// Doubles are written with round-trip precision, so read(write(x)) == x.
inline void write_dataset(const SyntheticDataset& ds, std::ostream& out) {
  using io::json;
  json header = {{"record", "header"},
                 {"format", kDatasetFormat},
                 {"version", kDatasetFormatVersion},
                 {"config", io::to_json(ds.config)},
                 {"true_d", ds.true_d},
                 {"trial_offset", ds.trial_offset}};
  if (!ds.config.per_subject_traces) header["env_trace"] = io::to_json(ds.traces.front());
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    const auto& s = ds.subjects[i];
    json rec = {{"group", to_string(s.group)},
                {"subject_id", s.subject_id},
                {"true_alpha", s.params.learning_rate()},
                {"true_tau", s.params.temperature()},
                {"choices", s.history.choices},
                {"rewards", s.history.rewards}};
    if (ds.config.per_subject_traces) rec["env_trace"] = io::to_json(ds.traces[i]);
    out << rec.dump() << '\n';
  }
}

inline SyntheticDataset read_dataset(std::istream& in) {
  using io::json;
  std::string line;
  if (!std::getline(in, line)) throw UsageError("read_dataset: empty input");
  const json header = json::parse(line);
  if (header.value("format", "") != kDatasetFormat) throw UsageError("read_dataset: not a dataset file");
  if (header.at("version").get<int>() != kDatasetFormatVersion)
    throw UsageError("read_dataset: unsupported format version");
  SyntheticDataset ds;
  ds.config = io::config_from_json(header.at("config"));
  ds.true_d = header.at("true_d").get<double>();
  ds.trial_offset = header.at("trial_offset").get<std::size_t>();
  if (!ds.config.per_subject_traces) ds.traces.push_back(io::trace_from_json(header.at("env_trace")));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    SubjectRecord s{group_from_string(rec.at("group").get<std::string>()), rec.at("subject_id").get<std::size_t>(),
                    SubjectParams(rec.at("true_alpha").get<double>(), rec.at("true_tau").get<double>()),
                    {rec.at("choices").get<std::vector<int>>(), rec.at("rewards").get<std::vector<int>>()}};
    if (s.history.choices.size() != ds.config.n_trials || s.history.rewards.size() != ds.config.n_trials)
      throw UsageError("read_dataset: subject history length does not match n_trials");
    if (ds.config.per_subject_traces) ds.traces.push_back(io::trace_from_json(rec.at("env_trace")));
    ds.subjects.push_back(std::move(s));
  }
  return ds;
}

inline std::string dataset_to_string(const SyntheticDataset& ds) {
  std::ostringstream os;
  write_dataset(ds, os);
  return os.str();
}

inline SyntheticDataset dataset_from_string(const std::string& s) {
  std::istringstream is(s);
  return read_dataset(is);
}

}  // namespace hbrec
