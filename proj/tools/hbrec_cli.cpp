// hbrec: generate synthetic case-control bandit datasets, fit both
// hierarchical models, and summarise recovery.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hbrec/dataset_io.hpp"
#include "hbrec/fit_io.hpp"
#include "hbrec/harness/execute.hpp"

namespace h = hbrec::harness;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string output;
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_resume) {
  cmd->add_option("--config", o.config_path, "TOML-style run config")->check(CLI::ExistingFile);
  cmd->add_option("--profile", o.profile, "base profile")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--jobs", o.jobs, "parallel workers")->check(CLI::PositiveNumber);
  cmd->add_option("--output", o.output, "run directory (overrides config and HBREC_OUTPUT_DIR)");
  if (with_resume) cmd->add_flag("--resume", o.resume, "continue a run in an existing directory");
}

h::RunConfig resolve(const CommonOptions& o) {
  h::RunConfig cfg = h::load_config(o.config_path.empty() ? std::nullopt : std::optional(o.config_path),
                                    o.profile.empty() ? std::nullopt : std::optional(o.profile));
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (!o.output.empty()) cfg.output_dir = o.output;
  cfg.validate();
  return cfg;
}

int run_stage(const CommonOptions& o, const std::vector<h::JobKind>& kinds) {
  const h::RunConfig cfg = resolve(o);
  const h::fs::path root = cfg.output_dir;
  if (h::fs::exists(root / h::Manifest::kFileName) && !o.resume) {
    std::cerr << "error: " << root << " already holds a run; pass --resume to continue it\n";
    return 2;
  }
  h::Manifest manifest(root, cfg.fingerprint());
  const auto all = h::plan(cfg);
  const auto jobs = h::select_jobs(all, kinds);
  std::cerr << "hbrec: " << jobs.size() << " jobs in " << root << " (profile " << cfg.profile << ", " << cfg.jobs
            << " worker" << (cfg.jobs == 1 ? "" : "s") << ")\n";
  const auto summary = h::execute(jobs, cfg, manifest, h::default_runner(cfg, root, all), cfg.jobs);
  std::cerr << "hbrec: ran " << summary.ran << ", cached " << summary.cached << ", failed " << summary.failed
            << ", blocked " << summary.blocked << "\n";
  for (const auto& f : summary.failures) std::cerr << "  " << f << "\n";
  if (summary.ok() && std::find(kinds.begin(), kinds.end(), h::JobKind::Aggregate) != kinds.end()) {
    std::cout << h::read_file(root / "tables/table1.txt") << "\n" << h::read_file(root / "tables/table2.txt");
  }
  return summary.ok() ? 0 : 1;
}

int run_single_fit(const CommonOptions& o, const std::string& dataset, int model, const std::string& out) {
  const h::RunConfig cfg = resolve(o);
  std::ifstream in(dataset);
  if (!in) throw hbrec::UsageError("cannot open dataset " + dataset);
  const auto ds = hbrec::read_dataset(in);
  hbrec::ModelSpec spec;
  spec.kind = model == 1 ? hbrec::ModelKind::SharedPrior : hbrec::ModelKind::SeparatePriors;
  hbrec::SamplerConfig sc = cfg.sampler;
  sc.seed = cfg.seed;
  sc.parallel_chains = cfg.jobs > 1;
  const auto fit = hbrec::nuts_fit_gated(spec, ds, sc);
  hbrec::save_fit(fit, out);
  std::printf("model %d: max rhat %.4f, min ess %.0f, divergences %zu, waic %.2f%s%s\n", model, fit.max_rhat(),
              fit.min_ess(), fit.total_divergences(), fit.waic.waic, fit.usable ? "" : " (unusable)",
              fit.retried ? " (retried)" : "");
  std::printf("wrote %s.draws.csv and %s.json\n", out.c_str(), out.c_str());
  return fit.usable ? 0 : 1;
}

int run_report(const CommonOptions& o) {
  const h::RunConfig cfg = resolve(o);
  const h::fs::path root = cfg.output_dir;
  if (!h::fs::exists(root)) {
    std::cerr << "error: no run directory " << root << "\n";
    return 2;
  }
  h::run_aggregate(cfg, root, h::plan(cfg));
  std::cout << h::read_file(root / "tables/table1.txt") << "\n" << h::read_file(root / "tables/table2.txt");
  return 0;
}

/// Recovery sanity check: uniformly distributed learning rates in both
/// groups, both models must recover per-subject alpha with rho above the
/// threshold.
int run_validate(const CommonOptions& o, double threshold) {
  const h::RunConfig cfg = resolve(o);
  hbrec::DatasetConfig dc{
      hbrec::GroupSpec{hbrec::BetaSpec(0.5, 2.0), cfg.tau_spec, cfg.n_subjects, hbrec::Group::Case},
      hbrec::GroupSpec{hbrec::BetaSpec(0.5, 2.0), cfg.tau_spec, cfg.n_subjects, hbrec::Group::Control}};
  dc.n_trials = cfg.n_trials;
  dc.env = cfg.env;
  dc.seed = hbrec::derive_seed(cfg.seed, {0x76616c6964ULL});
  dc.tolerance = cfg.tolerance;
  const auto ds = hbrec::generate_dataset(dc);
  bool ok = true;
  for (auto kind : h::kModels) {
    hbrec::ModelSpec spec;
    spec.kind = kind;
    hbrec::SamplerConfig sc = cfg.sampler;
    sc.seed = hbrec::derive_seed(cfg.seed, {0x76616c6964ULL, static_cast<std::uint64_t>(hbrec::model_number(kind))});
    sc.parallel_chains = cfg.jobs > 1;
    const auto fit = hbrec::nuts_fit_gated(spec, ds, sc);
    std::vector<double> est;
    for (std::size_t i = 0; i < ds.n_subjects(); ++i) est.push_back(fit.posterior_mean(fit.layout.alpha(i)));
    const double rho = hbrec::math::pearson(est, ds.true_alphas());
    const bool pass = rho > threshold;
    ok = ok && pass;
    std::printf("%s model %d: rho = %.4f (threshold %.2f), max rhat %.3f, divergences %zu\n", pass ? "PASS" : "FAIL",
                hbrec::model_number(kind), rho, threshold, fit.max_rhat(), fit.total_divergences());
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hbrec: hierarchical model recovery on simulated case-control bandit data"};
  app.require_subcommand(1);
  CommonOptions opts;

  auto* gen = app.add_subcommand("generate", "generate every dataset of the run");
  add_common(gen, opts, true);
  auto* fit = app.add_subcommand("fit", "fit both models to every dataset, or one dataset with --dataset");
  add_common(fit, opts, true);
  std::string dataset, out = "fit";
  int model = 2;
  fit->add_option("--dataset", dataset, "single dataset (.jsonl) to fit")->check(CLI::ExistingFile);
  fit->add_option("--model", model, "model for --dataset: 1 shared prior, 2 separate priors")
      ->check(CLI::IsMember({1, 2}));
  fit->add_option("--out", out, "output prefix for --dataset draws and metadata");
  auto* met = app.add_subcommand("metrics", "compute per-dataset metrics and aggregate results");
  add_common(met, opts, true);
  auto* rep = app.add_subcommand("report", "re-render result CSVs and tables from existing metrics");
  add_common(rep, opts, false);
  auto* all = app.add_subcommand("run-all", "generate, fit, score and tabulate");
  add_common(all, opts, true);
  auto* val = app.add_subcommand("validate", "parameter-recovery sanity check on uniform learning rates");
  add_common(val, opts, false);
  double threshold = 0.92;
  val->add_option("--threshold", threshold, "minimum Pearson rho");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;  // usage errors share the config exit code
  }
  try {
    using K = h::JobKind;
    if (*gen) return run_stage(opts, {K::Generate});
    if (*fit) {
      if (!dataset.empty()) return run_single_fit(opts, dataset, model, out);
      return run_stage(opts, {K::Generate, K::Fit});
    }
    if (*met) return run_stage(opts, {K::Generate, K::Fit, K::Metrics, K::Aggregate});
    if (*all) return run_stage(opts, {K::Generate, K::Fit, K::Metrics, K::Aggregate});
    if (*rep) return run_report(opts);
    if (*val) return run_validate(opts, threshold);
  } catch (const hbrec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const h::ManifestError& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
