#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbrec/dataset_io.hpp"
#include "hbrec/fit.hpp"
#include "hbrec/fit_io.hpp"
#include "hbrec/harness/config.hpp"
#include "hbrec/harness/files.hpp"
#include "hbrec/harness/plan.hpp"
#include "hbrec/metrics.hpp"

namespace hbrec::harness {

// Relative artifact paths under the run root.
inline std::string dataset_path(std::size_t c, std::size_t r, std::size_t p) {
  return "datasets/" + cell_tag(c) + "/" + resample_tag(r) + "/" + perturbation_tag(p) + ".jsonl";
}
inline std::string fit_dir(std::size_t c, std::size_t r, std::size_t p, ModelKind m) {
  return "fits/" + cell_tag(c) + "/" + resample_tag(r) + "/" + perturbation_tag(p) + "/" + model_tag(m);
}
inline std::string fit_summary_path(std::size_t c, std::size_t r, std::size_t p, ModelKind m) {
  return fit_dir(c, r, p, m) + "/summary.json";
}
inline std::string metrics_path(std::size_t c, std::size_t r, std::size_t p) {
  return "metrics/" + cell_tag(c) + "/" + resample_tag(r) + "/" + perturbation_tag(p) + ".json";
}

inline constexpr const char* kRecoveryCsv = "results/recovery.csv";
inline constexpr const char* kAggregateCsv = "results/aggregate.csv";
inline constexpr const char* kWaicCsv = "results/waic.csv";
inline constexpr const char* kWaicSummaryCsv = "results/waic_summary.csv";
inline constexpr const char* kComparisonsCsv = "results/comparisons.csv";

/// Seed of one fit, derived from the master seed and the job coordinates.
inline std::uint64_t fit_seed(const RunConfig& cfg, std::size_t c, std::size_t r, std::size_t p, ModelKind m) {
  return derive_seed(cfg.seed, {0x666974ULL, c, r, p, static_cast<std::uint64_t>(model_number(m))});
}

namespace detail {

inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
inline double num_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(read_file(path)); }

}  // namespace detail

/// Posterior summary kept for every fit; draws are written only on request.
inline nlohmann::json fit_summary(const FitResult& fit, const SyntheticDataset& data) {
  using detail::num;
  nlohmann::json alpha_mean = nlohmann::json::array(), alpha_sd = nlohmann::json::array(),
                 tau_mean = nlohmann::json::array();
  for (std::size_t i = 0; i < fit.layout.n_subjects; ++i) {
    alpha_mean.push_back(fit.posterior_mean(fit.layout.alpha(i)));
    alpha_sd.push_back(fit.posterior_sd(fit.layout.alpha(i)));
    tau_mean.push_back(fit.posterior_mean(fit.layout.tau(i)));
  }
  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t b = 0; b < fit.layout.n_blocks; ++b) {
    const std::size_t k = fit.layout.block(b);
    blocks.push_back({{"omega_alpha", fit.posterior_mean(k)},
                      {"kappa_alpha", fit.posterior_mean(k + 1)},
                      {"omega_tau", fit.posterior_mean(k + 2)},
                      {"kappa_tau", fit.posterior_mean(k + 3)}});
  }
  const auto diff = group_difference_posterior(fit, data);
  std::size_t treedepth_hits = 0;
  for (const auto& c : fit.chains) treedepth_hits += c.treedepth_hits;
  return {{"format", "hbrec-fit-summary"},
          {"version", 1},
          {"model", model_number(fit.spec.kind)},
          {"alpha_mean", alpha_mean},
          {"alpha_sd", alpha_sd},
          {"tau_mean", tau_mean},
          {"blocks", blocks},
          {"group_difference", {{"mean", num(diff.mean)}, {"lo95", num(diff.lo95)}, {"hi95", num(diff.hi95)}}},
          {"max_rhat", num(fit.max_rhat())},
          {"min_ess", num(fit.min_ess())},
          {"divergences", fit.total_divergences()},
          {"divergence_rate", fit.divergence_rate()},
          {"treedepth_hits", treedepth_hits},
          {"usable", fit.usable},
          {"retried", fit.retried},
          {"waic", {{"waic", num(fit.waic.waic)}, {"lppd", num(fit.waic.lppd)}, {"p_waic", num(fit.waic.p_waic)}}}};
}

/// Paths a job reads; the manifest hashes them to decide staleness.
inline std::vector<std::string> job_inputs(const RunConfig& cfg, const std::vector<Job>& all, const Job& job) {
  switch (job.kind) {
    case JobKind::Generate: return {};
    case JobKind::Fit: return {dataset_path(job.cell, job.resample, job.perturbation)};
    case JobKind::Metrics:
      return {dataset_path(job.cell, job.resample, job.perturbation),
              fit_summary_path(job.cell, job.resample, job.perturbation, ModelKind::SharedPrior),
              fit_summary_path(job.cell, job.resample, job.perturbation, ModelKind::SeparatePriors)};
    case JobKind::Aggregate: {
      std::vector<std::string> in;
      for (const auto& j : all)
        if (j.kind == JobKind::Metrics) in.push_back(metrics_path(j.cell, j.resample, j.perturbation));
      return in;
    }
  }
  (void)cfg;
  return {};
}

inline std::vector<std::string> run_generate(const RunConfig& cfg, const fs::path& root, const Job& job) {
  const SyntheticDataset full = generate_dataset(cfg.dataset_config(job.cell, job.resample));
  // One best window per shortened length, chosen on the full dataset and
  // shared by every perturbation with that length.
  std::map<std::size_t, std::size_t> window;
  for (const auto& p : cfg.perturbations)
    if (p.n_trials < full.n_trials() && !window.count(p.n_trials))
      window[p.n_trials] = select_best_window(full, p.n_trials, cfg.window_stride);
  std::vector<std::string> out;
  for (std::size_t p = 0; p < cfg.perturbations.size(); ++p) {
    const auto& pt = cfg.perturbations[p];
    const std::size_t start = window.count(pt.n_trials) ? window[pt.n_trials] : 0;
    const auto ds = perturb(full, pt.n_subjects, pt.n_trials, fixed_window(start));
    const std::string rel = dataset_path(job.cell, job.resample, p);
    write_file_atomic(root / rel, dataset_to_string(ds));
    out.push_back(rel);
  }
  return out;
}

inline std::vector<std::string> run_fit(const RunConfig& cfg, const fs::path& root, const Job& job) {
  const std::string in = read_file(root / dataset_path(job.cell, job.resample, job.perturbation));
  const SyntheticDataset ds = dataset_from_string(in);
  ModelSpec spec;
  spec.kind = job.model;
  SamplerConfig sc = cfg.sampler;
  sc.seed = fit_seed(cfg, job.cell, job.resample, job.perturbation, job.model);
  sc.parallel_chains = false;
  const FitResult fit = nuts_fit_gated(spec, ds, sc);
  const std::string dir = fit_dir(job.cell, job.resample, job.perturbation, job.model);
  std::vector<std::string> out{dir + "/summary.json"};
  write_file_atomic(root / out[0], fit_summary(fit, ds).dump(1) + "\n");
  if (cfg.keep_draws) {
    std::ostringstream draws;
    write_draws_csv(fit, draws);
    write_file_atomic(root / (dir + "/draws.csv"), draws.str());
    write_file_atomic(root / (dir + "/fit.json"), fit_metadata(fit).dump(1) + "\n");
    out.push_back(dir + "/draws.csv");
    out.push_back(dir + "/fit.json");
  }
  return out;
}

inline std::vector<std::string> run_metrics(const RunConfig& cfg, const fs::path& root, const Job& job) {
  using detail::num;
  const SyntheticDataset ds =
      dataset_from_string(read_file(root / dataset_path(job.cell, job.resample, job.perturbation)));
  const GridCell cell = cfg.grid().at(job.cell);
  const bool truth = cell.truth_differs();
  const auto truth_alpha = ds.true_alphas();
  nlohmann::json models = nlohmann::json::array();
  double waic[2] = {0, 0};
  for (ModelKind m : kModels) {
    const auto s = detail::read_json(root / fit_summary_path(job.cell, job.resample, job.perturbation, m));
    const auto means = s.at("alpha_mean").get<std::vector<double>>();
    if (means.size() != ds.n_subjects()) throw UsageError("fit summary does not match its dataset");
    RecoveredGroups rec;
    rec.fit_usable = s.at("usable").get<bool>();
    for (std::size_t i = 0; i < ds.n_subjects(); ++i)
      (ds.subjects[i].group == Group::Case ? rec.case_alpha : rec.control_alpha).push_back(means[i]);
    const RecoveryReport r = make_report(ds, rec, truth, cfg.alpha_level);
    const double w = detail::num_or_nan(s.at("waic").at("waic"));
    waic[model_number(m) - 1] = w;
    models.push_back({{"model", model_number(m)},
                      {"recovered_d", num(r.recovered_d)},
                      {"es_error_pct", num(r.es_error_pct)},
                      {"detected", r.detected},
                      {"usable", r.fit_usable},
                      {"retried", s.at("retried")},
                      {"rho", num(math::pearson(means, truth_alpha))},
                      {"waic", num(w)},
                      {"max_rhat", s.at("max_rhat")},
                      {"divergences", s.at("divergences")}});
  }
  const nlohmann::json out = {{"cell", job.cell},
                              {"resample", job.resample},
                              {"perturbation", job.perturbation},
                              {"n_subjects", cfg.perturbations[job.perturbation].n_subjects},
                              {"n_trials", cfg.perturbations[job.perturbation].n_trials},
                              {"case_mode", cell.case_alpha.mode()},
                              {"control_mode", cell.control_alpha.mode()},
                              {"concentration", cell.case_alpha.concentration()},
                              {"truth_differs", truth},
                              {"true_d", num(ds.true_d)},
                              {"trial_offset", ds.trial_offset},
                              {"models", models},
                              {"delta_waic", num(waic[0] - waic[1])}};
  const std::string rel = metrics_path(job.cell, job.resample, job.perturbation);
  write_file_atomic(root / rel, out.dump(1) + "\n");
  return {rel};
}

}  // namespace hbrec::harness
