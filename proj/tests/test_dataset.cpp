#include <cmath>

#include <gtest/gtest.h>

#include "hbrec/dataset.hpp"
#include "hbrec/dataset_io.hpp"

using namespace hbrec;

namespace {

DatasetConfig small_config(std::size_t n = 10, std::size_t trials = 60) {
  const BetaSpec tau(0.15, 30.0);
  DatasetConfig cfg{GroupSpec{BetaSpec(0.6, 10.0), tau, n, Group::Case},
                    GroupSpec{BetaSpec(0.3, 10.0), tau, n, Group::Control}};
  cfg.n_trials = trials;
  cfg.resample_count = 5;
  cfg.seed = 1234;
  return cfg;
}

}  // namespace

TEST(BuildGrid, FullConcentrationListGives36Configs) {
  const auto grid = build_grid(default_case_modes(), paper_concentrations());
  EXPECT_EQ(grid.size(), 36u);
  std::size_t null_cells = 0;
  for (const auto& c : grid) {
    EXPECT_EQ(c.control_alpha.mode(), 0.3);
    null_cells += c.case_alpha == c.control_alpha;
  }
  EXPECT_EQ(null_cells, 6u);
}

TEST(BuildGrid, NullConfigurationPresent) {
  const auto grid = build_grid({0.3, 0.5}, {3.0});
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_FALSE(grid[0].truth_differs());
  EXPECT_TRUE(grid[1].truth_differs());
}

TEST(BuildGrid, SingleCell) { EXPECT_EQ(build_grid({0.5}, {30.0}).size(), 1u); }

TEST(BuildGrid, EmptyListsRejected) {
  EXPECT_THROW(build_grid({}, {3.0}), UsageError);
  EXPECT_THROW(build_grid({0.3}, {}), UsageError);
}

TEST(BuildGrid, CartesianPairing) {
  PairingRule rule;
  rule.kind = PairingRule::Kind::Cartesian;
  EXPECT_EQ(build_grid({0.2, 0.4, 0.6}, {3.0, 30.0}, rule).size(), 18u);
}

TEST(GridCell, UniformCellsNeverDiffer) {
  EXPECT_FALSE((GridCell{BetaSpec(0.8, 2.0), BetaSpec(0.3, 2.0)}.truth_differs()));
}

TEST(SampleGroupParams, AcceptedSampleMatchesTheoreticalMean) {
  Rng rng(17);
  const GroupSpec spec{BetaSpec(0.3, 30.0), BetaSpec(0.15, 30.0), 50, Group::Control};
  const auto s = sample_group_params(spec, 0.02, 10000, rng);
  ASSERT_EQ(s.params.size(), 50u);
  const auto shapes = beta_shapes(spec.alpha_spec);
  const auto [m, sd] = alpha_moments(s.params);
  EXPECT_LE(std::abs(m - shapes.a / (shapes.a + shapes.b)), 0.02);
  EXPECT_LE(std::abs(sd - shapes.sd()), 0.02);
}

TEST(SampleGroupParams, VacuousToleranceAcceptsFirstDraw) {
  Rng rng(1);
  const GroupSpec spec{BetaSpec(0.5, 2.0), BetaSpec(0.15, 30.0), 5, Group::Case};
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_group_params(spec, 1.0, 1, rng).attempts, 1u);
}

TEST(SampleGroupParams, ImpossibleToleranceFails) {
  // Oracle: brute-force acceptance probability of one attempt for n = 2 uniform
  // draws at tolerance 0.001.
  const double target_mean = 0.5, target_sd = std::sqrt(1.0 / 12.0);
  Rng oracle(2024);
  std::size_t hits = 0;
  const std::size_t trials = 2000000;
  for (std::size_t i = 0; i < trials; ++i) {
    const double x = uniform01(oracle), y = uniform01(oracle);
    const double m = 0.5 * (x + y), sd = std::abs(x - y) / std::sqrt(2.0);
    hits += std::abs(m - target_mean) <= 0.001 && std::abs(sd - target_sd) <= 0.001;
  }
  const double p_attempt = (hits + 1.0) / trials;  // conservative
  EXPECT_LT(1.0 - std::pow(1.0 - p_attempt, 10), 1e-3);

  Rng rng(5);
  const GroupSpec spec{BetaSpec(0.5, 2.0), BetaSpec(0.15, 30.0), 2, Group::Case};
  try {
    sample_group_params(spec, 0.001, 10, rng);
    FAIL() << "expected RejectionFailure";
  } catch (const RejectionFailure& e) {
    EXPECT_EQ(e.attempts(), 10u);
    EXPECT_GT(e.best_mean_error() + e.best_sd_error(), 0.0);
  }
}

TEST(SampleGroupParams, FidelityPropertyAcrossManyGroups) {
  Rng rng(77);
  const std::vector<double> modes = {0.01, 0.3, 0.5, 0.8, 0.99};
  const std::vector<double> concs = {2.0, 3.0, 10.0, 30.0};
  for (std::size_t i = 0; i < 200; ++i) {
    const GroupSpec spec{BetaSpec(modes[i % modes.size()], concs[(i / 5) % concs.size()]), BetaSpec(0.15, 30.0), 50,
                         Group::Case};
    const auto s = sample_group_params(spec, 0.02, 100000, rng);
    ASSERT_TRUE(passes_fidelity(s.params, spec.alpha_spec, 0.02));
  }
}

TEST(GenerateDataset, ShapeContract) {
  auto cfg = small_config(50, 200);
  const auto ds = generate_dataset(cfg);
  EXPECT_EQ(ds.n_subjects(), 100u);
  for (const auto& s : ds.subjects) {
    EXPECT_EQ(s.history.choices.size(), 200u);
    EXPECT_EQ(s.history.rewards.size(), 200u);
  }
  EXPECT_EQ(ds.traces.size(), 1u);
  EXPECT_EQ(ds.traces[0].n_trials(), 200u);
  EXPECT_EQ(ds.true_alphas(Group::Case).size(), 50u);
}

TEST(GenerateDataset, DeterministicAndResampled) {
  const auto cfg = small_config();
  const auto a = generate_dataset(cfg);
  EXPECT_EQ(a, generate_dataset(cfg));
  auto other = cfg;
  other.resample_id = 1;
  const auto b = generate_dataset(other);
  EXPECT_NE(a.true_alphas(), b.true_alphas());
}

TEST(GenerateDataset, CachedTrueEffectSizeMatchesRecomputation) {
  for (std::size_t r = 0; r < 5; ++r) {
    auto cfg = small_config();
    cfg.resample_id = r;
    const auto ds = generate_dataset(cfg);
    EXPECT_NEAR(ds.true_d, ds.compute_true_d(), 1e-12);
    const auto back = dataset_from_string(dataset_to_string(ds));
    EXPECT_NEAR(back.true_d, back.compute_true_d(), 1e-12);
  }
}

TEST(GenerateDataset, ValidatesConfig) {
  auto cfg = small_config();
  cfg.resample_id = 5;
  EXPECT_THROW(generate_dataset(cfg), UsageError);
}

TEST(GenerateDataset, PerSubjectTraces) {
  auto cfg = small_config(4, 30);
  cfg.per_subject_traces = true;
  const auto ds = generate_dataset(cfg);
  ASSERT_EQ(ds.traces.size(), 8u);
  EXPECT_NE(ds.traces[0], ds.traces[1]);
  EXPECT_EQ(dataset_from_string(dataset_to_string(ds)), ds);
}

TEST(DatasetIo, BitExactRoundTrip) {
  const auto ds = generate_dataset(small_config());
  const auto text = dataset_to_string(ds);
  const auto back = dataset_from_string(text);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(dataset_to_string(back), text);
}

TEST(DatasetIo, HeaderCarriesFormatTag) {
  const auto text = dataset_to_string(generate_dataset(small_config(2, 5)));
  const auto header = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(header["format"], "hbrec-dataset");
  EXPECT_EQ(header["version"], 1);
  EXPECT_EQ(header["config"]["seed"], 1234u);
  EXPECT_THROW(dataset_from_string("{\"format\":\"other\"}\n"), UsageError);
}

TEST(Perturb, IdentityAtFullSize) {
  const auto ds = generate_dataset(small_config(10, 60));
  EXPECT_EQ(perturb(ds, 10, 60, fixed_window(0)), ds);
}

TEST(Perturb, SubjectPrefixAndWindow) {
  const auto ds = generate_dataset(small_config(10, 60));
  const auto p = perturb(ds, 4, 20, fixed_window(15));
  EXPECT_EQ(p.n_subjects(), 8u);
  EXPECT_EQ(p.n_trials(), 20u);
  EXPECT_EQ(p.trial_offset, 15u);
  EXPECT_EQ(p.subjects[0].history.choices[0], ds.subjects[0].history.choices[15]);
  EXPECT_EQ(p.subjects[4].subject_id, 0u);
  EXPECT_EQ(p.subjects[4].group, Group::Control);
  EXPECT_EQ(p.traces[0].probability(0, 1), ds.traces[0].probability(15, 1));
  EXPECT_NEAR(p.true_d, p.compute_true_d(), 1e-12);
}

TEST(Perturb, StandardSizes) {
  const auto ds = generate_dataset(small_config(50, 200));
  const auto sub = perturb(ds, 15, 200, fixed_window(0));
  EXPECT_EQ(sub.n_subjects(), 30u);
  EXPECT_EQ(sub.n_trials(), 200u);
  const auto win = perturb(ds, 50, 40, best_window(20));
  EXPECT_EQ(win.n_trials(), 40u);
  EXPECT_EQ(win.n_subjects(), 100u);
  EXPECT_EQ(win.trial_offset % 20, 0u);
}

TEST(Perturb, OversizeRejected) {
  const auto ds = generate_dataset(small_config(10, 60));
  EXPECT_THROW(perturb(ds, 11, 60, fixed_window(0)), UsageError);
  EXPECT_THROW(perturb(ds, 10, 61, fixed_window(0)), UsageError);
  EXPECT_THROW(perturb(ds, 10, 30, fixed_window(40)), UsageError);
}

TEST(Perturb, CompositionEqualsSinglePerturb) {
  const auto ds = generate_dataset(small_config(10, 60));
  for (std::size_t s1 : {0u, 5u, 20u}) {
    for (std::size_t s2 : {0u, 3u, 10u}) {
      const auto twice = perturb(perturb(ds, 7, 30, fixed_window(s1)), 4, 20, fixed_window(s2));
      const auto once = perturb(ds, 4, 20, fixed_window(s1 + s2));
      EXPECT_EQ(twice, once) << s1 << " " << s2;
    }
  }
}

TEST(SelectBestWindow, FullLengthIsStartZero) {
  const auto ds = generate_dataset(small_config(5, 40));
  EXPECT_EQ(select_best_window(ds, 40, 7), 0u);
}

TEST(SelectBestWindow, CandidateCount) {
  const auto ds = generate_dataset(small_config(5, 200));
  EXPECT_EQ(score_windows(ds, 40, 20).size(), 9u);
}

TEST(SelectBestWindow, InformativeWindowBeatsRewardlessWindow) {
  // Trials 0-39 never pay out (zero reward variance); trials 40-79 rove.
  const std::size_t n_trials = 80;
  std::vector<double> probs;
  RovingBanditConfig env;
  env.seed = 8;
  const auto roving = generate_trace(env, n_trials);
  for (std::size_t t = 0; t < n_trials; ++t)
    for (std::size_t a = 0; a < 2; ++a) probs.push_back(t < 40 ? 0.0 : roving.probability(t, a));
  const EnvTrace trace(n_trials, 2, probs);

  auto cfg = small_config(15, n_trials);
  SyntheticDataset ds;
  ds.config = cfg;
  ds.traces.push_back(trace);
  Rng rng(99);
  for (Group g : {Group::Case, Group::Control}) {
    for (std::size_t i = 0; i < 15; ++i) {
      const SubjectParams p(0.05 + 0.9 * uniform01(rng), 0.1);
      ds.subjects.push_back({g, i, p, simulate_subject(p, trace, n_trials, derive_seed(3, {i, (std::uint64_t)g}))});
    }
  }
  ds.true_d = ds.compute_true_d();

  const auto scores = score_windows(ds, 40, 40);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_GT(scores[1].rho, scores[0].rho);
  EXPECT_EQ(select_best_window(ds, 40, 40), 40u);
}
