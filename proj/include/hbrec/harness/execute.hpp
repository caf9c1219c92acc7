#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <iostream>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

#include "hbrec/harness/manifest.hpp"
#include "hbrec/harness/report.hpp"

namespace hbrec::harness {

enum class JobState { Pending, Running, Done, Cached, Failed, Blocked };

struct ExecutionSummary {
  std::size_t ran = 0;
  std::size_t cached = 0;
  std::size_t failed = 0;
  std::size_t blocked = 0;
  std::vector<std::string> failures;  ///< "job: error"

  bool ok() const noexcept { return failed == 0 && blocked == 0; }
};

/// Runs a job and returns the relative paths it wrote.
using JobRunner = std::function<std::vector<std::string>(const Job&)>;

inline JobRunner default_runner(const RunConfig& cfg, const fs::path& root, const std::vector<Job>& all) {
  return [&cfg, root, &all](const Job& job) -> std::vector<std::string> {
    switch (job.kind) {
      case JobKind::Generate: return run_generate(cfg, root, job);
      case JobKind::Fit: return run_fit(cfg, root, job);
      case JobKind::Metrics: return run_metrics(cfg, root, job);
      case JobKind::Aggregate: return run_aggregate(cfg, root, all);
    }
    return {};
  };
}

/// Keeps the jobs of the given kinds; dependencies are re-indexed and any
/// dependency outside the subset is dropped.
inline std::vector<Job> select_jobs(const std::vector<Job>& all, const std::vector<JobKind>& kinds) {
  std::vector<std::size_t> remap(all.size(), static_cast<std::size_t>(-1));
  std::vector<Job> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (std::find(kinds.begin(), kinds.end(), all[i].kind) == kinds.end()) continue;
    remap[i] = out.size();
    Job j = all[i];
    j.deps.clear();
    for (std::size_t d : all[i].deps)
      if (remap[d] != static_cast<std::size_t>(-1)) j.deps.push_back(remap[d]);
    out.push_back(std::move(j));
  }
  return out;
}

/// Runs `jobs` (in dependency order) on `width` workers. A job whose
/// manifest record is complete and whose inputs and outputs still hash as
/// recorded is skipped. Failures are recorded; jobs downstream of a failure
/// are blocked, except aggregation, which runs on whatever completed.
inline ExecutionSummary execute(const std::vector<Job>& jobs, const RunConfig& cfg, Manifest& manifest,
                                const JobRunner& runner, std::size_t width, std::ostream* log = &std::cerr) {
  if (width < 1) throw UsageError("execute: width must be >= 1");
  const std::size_t n = jobs.size();
  std::vector<JobState> state(n, JobState::Pending);
  std::vector<std::size_t> waiting(n, 0);
  std::vector<std::vector<std::size_t>> dependents(n);
  for (std::size_t i = 0; i < n; ++i) {
    waiting[i] = jobs[i].deps.size();
    for (std::size_t d : jobs[i].deps) {
      if (d >= i) throw UsageError("execute: jobs must be listed after their dependencies");
      dependents[d].push_back(i);
    }
  }

  std::mutex mu;
  std::condition_variable cv;
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (waiting[i] == 0) ready.push(i);
  std::size_t finished = 0;
  ExecutionSummary summary;

  auto log_line = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };

  // Called with `mu` held.
  std::function<void(std::size_t)> settle = [&](std::size_t i) {
    ++finished;
    const bool good = state[i] == JobState::Done || state[i] == JobState::Cached;
    for (std::size_t k : dependents[i]) {
      if (state[k] != JobState::Pending) continue;
      if (!good && jobs[k].kind != JobKind::Aggregate) {
        state[k] = JobState::Blocked;
        ++summary.blocked;
        settle(k);
        continue;
      }
      if (--waiting[k] == 0) ready.push(k);
    }
  };

  auto worker = [&] {
    std::unique_lock lock(mu);
    while (true) {
      cv.wait(lock, [&] { return !ready.empty() || finished == n; });
      if (ready.empty()) return;
      const std::size_t i = ready.top();
      ready.pop();
      if (state[i] != JobState::Pending) continue;
      state[i] = JobState::Running;
      lock.unlock();

      const Job& job = jobs[i];
      const auto inputs = job_inputs(cfg, jobs, job);
      const auto issues = manifest.check(job.id, inputs);
      JobState result;
      std::string message;
      if (issues.empty()) {
        result = JobState::Cached;
      } else {
        if (const auto rec = manifest.record(job.id); rec && rec->status == "done")
          for (const auto& is : issues) log_line("stale " + job.id + ": " + is.problem + (is.path.empty() ? "" : " " + is.path));
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const auto outputs = runner(job);
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          manifest.record_done(job.id, inputs, outputs, secs);
          result = JobState::Done;
          char buf[64];
          std::snprintf(buf, sizeof buf, " (%.1fs)", secs);
          message = "done " + job.id + buf;
        } catch (const std::exception& e) {
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          manifest.record_failed(job.id, e.what(), secs);
          result = JobState::Failed;
          message = "FAILED " + job.id + ": " + e.what();
        }
      }

      lock.lock();
      state[i] = result;
      if (result == JobState::Done) ++summary.ran;
      if (result == JobState::Cached) ++summary.cached;
      if (result == JobState::Failed) {
        ++summary.failed;
        summary.failures.push_back(message);
      }
      settle(i);
      if (!message.empty())
        log_line("[" + std::to_string(finished) + "/" + std::to_string(n) + "] " + message);
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < width; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return summary;
}

}  // namespace hbrec::harness
