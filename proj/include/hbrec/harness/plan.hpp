#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "hbrec/harness/config.hpp"
#include "hbrec/posterior.hpp"

namespace hbrec::harness {

enum class JobKind { Generate, Fit, Metrics, Aggregate };

struct Job {
  std::string id;
  JobKind kind = JobKind::Generate;
  std::size_t cell = 0;
  std::size_t resample = 0;
  std::size_t perturbation = 0;  ///< index into RunConfig::perturbations
  ModelKind model = ModelKind::SharedPrior;
  std::vector<std::size_t> deps;  ///< indices of earlier jobs
};

namespace detail {

inline std::string pad(char tag, std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", tag, width, v);
  return buf;
}

}  // namespace detail

inline std::string cell_tag(std::size_t cell) { return detail::pad('c', cell, 2); }
inline std::string resample_tag(std::size_t r) { return detail::pad('r', r, 4); }
inline std::string perturbation_tag(std::size_t p) { return "p" + std::to_string(p + 1); }
inline std::string model_tag(ModelKind m) { return "m" + std::to_string(model_number(m)); }

inline std::string generate_id(std::size_t cell, std::size_t r) { return "gen/" + cell_tag(cell) + "/" + resample_tag(r); }
inline std::string fit_id(std::size_t cell, std::size_t r, std::size_t p, ModelKind m) {
  return "fit/" + cell_tag(cell) + "/" + resample_tag(r) + "/" + perturbation_tag(p) + "/" + model_tag(m);
}
inline std::string metrics_id(std::size_t cell, std::size_t r, std::size_t p) {
  return "met/" + cell_tag(cell) + "/" + resample_tag(r) + "/" + perturbation_tag(p);
}

inline constexpr ModelKind kModels[] = {ModelKind::SharedPrior, ModelKind::SeparatePriors};

/// Jobs in dependency order: per (cell, resample) one generation job, then
/// per perturbation two fits and a metrics job; a final aggregation job.
inline std::vector<Job> plan(const RunConfig& config) {
  config.validate();
  const std::size_t n_cells = config.grid().size();
  std::vector<Job> jobs;
  std::vector<std::size_t> metric_jobs;
  for (std::size_t c = 0; c < n_cells; ++c) {
    for (std::size_t r = 0; r < config.resamples; ++r) {
      const std::size_t gen = jobs.size();
      jobs.push_back({generate_id(c, r), JobKind::Generate, c, r, 0, ModelKind::SharedPrior, {}});
      for (std::size_t p = 0; p < config.perturbations.size(); ++p) {
        std::vector<std::size_t> fits;
        for (ModelKind m : kModels) {
          fits.push_back(jobs.size());
          jobs.push_back({fit_id(c, r, p, m), JobKind::Fit, c, r, p, m, {gen}});
        }
        metric_jobs.push_back(jobs.size());
        jobs.push_back({metrics_id(c, r, p), JobKind::Metrics, c, r, p, ModelKind::SharedPrior, {gen, fits[0], fits[1]}});
      }
    }
  }
  jobs.push_back({"agg", JobKind::Aggregate, 0, 0, 0, ModelKind::SharedPrior, metric_jobs});
  return jobs;
}

inline std::size_t count_jobs(const std::vector<Job>& jobs, JobKind kind) {
  std::size_t n = 0;
  for (const auto& j : jobs) n += j.kind == kind;
  return n;
}

}  // namespace hbrec::harness
