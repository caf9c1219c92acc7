#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "hbrec/dataset.hpp"
#include "hbrec/effect_size.hpp"
#include "hbrec/fit.hpp"
#include "hbrec/math.hpp"
#include "hbrec/rng.hpp"
#include "hbrec/waic.hpp"

namespace hbrec {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RecoveredGroups {
  std::vector<double> case_alpha;
  std::vector<double> control_alpha;
  bool fit_usable = false;
};

/// Per-subject posterior-mean learning rates split by the true group label.
inline RecoveredGroups recovered_groups(const FitResult& fit, const SyntheticDataset& data) {
  if (fit.layout.n_subjects != data.subjects.size())
    throw UsageError("recovered_groups: fit and dataset disagree on subject count");
  RecoveredGroups out;
  out.fit_usable = fit.usable;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const double m = fit.posterior_mean(fit.layout.alpha(i));
    (data.subjects[i].group == Group::Case ? out.case_alpha : out.control_alpha).push_back(m);
  }
  return out;
}

struct WelchResult {
  double t = kNaN;
  double df = kNaN;
  double p_value = kNaN;
  bool degenerate = false;  ///< both groups have zero variance
};

/// Two-sided Welch two-sample t-test.
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw UsageError("welch_t_test: each group needs at least 2 values");
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = math::variance(a) / na;
  const double vb = math::variance(b) / nb;
  WelchResult r;
  if (!(va + vb > 0)) {
    r.degenerate = true;
    return r;
  }
  r.t = (math::mean(a) - math::mean(b)) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const boost::math::students_t dist(r.df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

/// Welch test at `alpha_level`. Zero variance in both groups counts as no
/// detection and sets `*degenerate` when given.
inline bool detect_difference(std::span<const double> case_estimates, std::span<const double> control_estimates,
                              double alpha_level = 0.05, bool* degenerate = nullptr) {
  const auto r = welch_t_test(case_estimates, control_estimates);
  if (degenerate) *degenerate = r.degenerate;
  if (r.degenerate) return false;
  return r.p_value < alpha_level;
}

struct RecoveryReport {
  double true_d = 0;
  double recovered_d = 0;
  double es_error_pct = kNaN;  ///< NaN when true_d == 0
  bool detected = false;
  bool truth_differs = false;
  bool fit_usable = false;
};

/// 100 (recovered - true) / true; NaN sentinel for a zero true effect.
inline double es_error_pct(double true_d, double recovered_d) {
  return true_d == 0.0 ? kNaN : 100.0 * (recovered_d - true_d) / true_d;
}

inline RecoveryReport make_report(const SyntheticDataset& data, const RecoveredGroups& rec, bool truth_differs,
                                  double alpha_level = 0.05) {
  RecoveryReport r;
  r.true_d = data.compute_true_d();
  r.recovered_d = cohens_d(rec.case_alpha, rec.control_alpha);
  r.es_error_pct = es_error_pct(r.true_d, r.recovered_d);
  r.detected = detect_difference(rec.case_alpha, rec.control_alpha, alpha_level);
  r.truth_differs = truth_differs;
  r.fit_usable = rec.fit_usable;
  return r;
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double fpr_pct() const { return fp + tn ? 100.0 * static_cast<double>(fp) / static_cast<double>(fp + tn) : kNaN; }
  double fnr_pct() const { return fn + tp ? 100.0 * static_cast<double>(fn) / static_cast<double>(fn + tp) : kNaN; }
  double f1_pct() const {
    if (tp == 0) return fn + fp > 0 ? 0.0 : kNaN;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 100.0 * 2.0 * precision * recall / (precision + recall);
  }

  void add(bool truth, bool detected) {
    if (truth) (detected ? tp : fn)++;
    else (detected ? fp : tn)++;
  }
};

inline ConfusionCounts confusion(std::span<const RecoveryReport> reports) {
  ConfusionCounts c;
  for (const auto& r : reports) c.add(r.truth_differs, r.detected);
  return c;
}

struct AggregateReport {
  double fpr_pct = kNaN, fpr_ci = kNaN;
  double fnr_pct = kNaN, fnr_ci = kNaN;
  double f1_pct = kNaN, f1_ci = kNaN;
  std::size_t n_resamples = 0;
  std::size_t n_usable = 0;
  bool ci_degenerate = false;
  ConfusionCounts counts;
  /// Signed effect-size errors over reports whose truth differs.
  double es_error_weighted_pct = kNaN;  ///< |true_d|-weighted, i.e. 100 (sum sign*rec - sum |true|) / sum |true|
  double es_error_mean_pct = kNaN;
  double es_error_median_pct = kNaN;
};

struct EsErrorSummary {
  double weighted = kNaN, mean = kNaN, median = kNaN;
};

inline EsErrorSummary es_error_summary(std::span<const RecoveryReport> reports) {
  std::vector<double> errs;
  double num = 0, den = 0;
  for (const auto& r : reports) {
    if (!r.truth_differs || r.true_d == 0.0 || !std::isfinite(r.recovered_d)) continue;
    errs.push_back(r.es_error_pct);
    const double s = r.true_d > 0 ? 1.0 : -1.0;
    num += s * r.recovered_d - std::abs(r.true_d);
    den += std::abs(r.true_d);
  }
  EsErrorSummary out;
  if (errs.empty()) return out;
  out.weighted = 100.0 * num / den;
  out.mean = math::mean(errs);
  std::sort(errs.begin(), errs.end());
  const std::size_t n = errs.size();
  out.median = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
  return out;
}

namespace detail {

inline double percentile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double binomial_half_width(double pct, std::size_t n) {
  if (n == 0 || std::isnan(pct)) return kNaN;
  const double p = pct / 100.0;
  return 100.0 * 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace detail

inline constexpr std::uint64_t kBootstrapSeed = 0x626f6f74ULL;

/// FPR / FNR / F1 in percent. Rate CIs use the normal approximation to the
/// binomial; the F1 CI is a percentile bootstrap over reports. Half-widths
/// are reported. Depends only on the multiset of reports, not their order.
inline AggregateReport aggregate(std::span<const RecoveryReport> reports, std::size_t n_bootstrap = 2000,
                                 std::uint64_t seed = kBootstrapSeed) {
  if (reports.empty()) throw UsageError("aggregate: no reports");
  AggregateReport a;
  a.counts = confusion(reports);
  a.n_resamples = reports.size();
  for (const auto& r : reports) a.n_usable += r.fit_usable ? 1 : 0;
  a.fpr_pct = a.counts.fpr_pct();
  a.fnr_pct = a.counts.fnr_pct();
  a.f1_pct = a.counts.f1_pct();
  const auto es = es_error_summary(reports);
  a.es_error_weighted_pct = es.weighted;
  a.es_error_mean_pct = es.mean;
  a.es_error_median_pct = es.median;

  if (reports.size() < 2) {
    a.ci_degenerate = true;
    a.fpr_ci = a.fnr_ci = a.f1_ci = 50.0;  // the whole [0, 100] range
    return a;
  }
  a.fpr_ci = detail::binomial_half_width(a.fpr_pct, a.counts.fp + a.counts.tn);
  a.fnr_ci = detail::binomial_half_width(a.fnr_pct, a.counts.fn + a.counts.tp);

  // Bootstrap over confusion categories in canonical order (tp, fn, fp, tn).
  std::vector<std::uint8_t> cat;
  cat.insert(cat.end(), a.counts.tp, 0);
  cat.insert(cat.end(), a.counts.fn, 1);
  cat.insert(cat.end(), a.counts.fp, 2);
  cat.insert(cat.end(), a.counts.tn, 3);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cat.size() - 1);
  std::vector<double> f1s;
  for (std::size_t b = 0; b < n_bootstrap; ++b) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < cat.size(); ++i) {
      switch (cat[pick(rng)]) {
        case 0: ++c.tp; break;
        case 1: ++c.fn; break;
        case 2: ++c.fp; break;
        default: ++c.tn; break;
      }
    }
    const double f = c.f1_pct();
    if (!std::isnan(f)) f1s.push_back(f);
  }
  if (f1s.size() >= 2)
    a.f1_ci = 0.5 * (detail::percentile(f1s, 0.975) - detail::percentile(f1s, 0.025));
  return a;
}

struct DifferenceCi {
  double estimate = kNaN;  ///< metric(model 2) - metric(model 1)
  double lo = kNaN;
  double hi = kNaN;

  bool excludes_zero() const { return lo > 0 || hi < 0; }
};

struct ModelComparison {
  DifferenceCi f1, fnr, fpr;
};

/// Paired percentile bootstrap of metric differences between two models fit
/// to the same datasets. `m1[i]` and `m2[i]` must describe the same dataset.
inline ModelComparison compare_models(std::span<const RecoveryReport> m1, std::span<const RecoveryReport> m2,
                                      std::size_t n_bootstrap = 2000, std::uint64_t seed = kBootstrapSeed) {
  if (m1.size() != m2.size() || m1.empty()) throw UsageError("compare_models: need equal, non-empty report lists");
  for (std::size_t i = 0; i < m1.size(); ++i)
    if (m1[i].truth_differs != m2[i].truth_differs) throw UsageError("compare_models: reports are not paired");
  const auto c1 = confusion(m1), c2 = confusion(m2);
  ModelComparison out;
  out.f1.estimate = c2.f1_pct() - c1.f1_pct();
  out.fnr.estimate = c2.fnr_pct() - c1.fnr_pct();
  out.fpr.estimate = c2.fpr_pct() - c1.fpr_pct();

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, m1.size() - 1);
  std::vector<double> f1, fnr, fpr;
  for (std::size_t b = 0; b < n_bootstrap; ++b) {
    ConfusionCounts b1, b2;
    for (std::size_t i = 0; i < m1.size(); ++i) {
      const std::size_t k = pick(rng);
      b1.add(m1[k].truth_differs, m1[k].detected);
      b2.add(m2[k].truth_differs, m2[k].detected);
    }
    const double df1 = b2.f1_pct() - b1.f1_pct();
    const double dfn = b2.fnr_pct() - b1.fnr_pct();
    const double dfp = b2.fpr_pct() - b1.fpr_pct();
    if (!std::isnan(df1)) f1.push_back(df1);
    if (!std::isnan(dfn)) fnr.push_back(dfn);
    if (!std::isnan(dfp)) fpr.push_back(dfp);
  }
  auto fill = [](DifferenceCi& d, const std::vector<double>& xs) {
    if (xs.size() < 2) return;
    d.lo = detail::percentile(xs, 0.025);
    d.hi = detail::percentile(xs, 0.975);
  };
  fill(out.f1, f1);
  fill(out.fnr, fnr);
  fill(out.fpr, fpr);
  return out;
}

/// Posterior of (mean case alpha - mean control alpha) over subjects, per
/// draw. Diagnostic only; detection uses the Welch test on posterior means.
struct GroupDifferencePosterior {
  double mean = kNaN;
  double lo95 = kNaN;
  double hi95 = kNaN;
};

inline GroupDifferencePosterior group_difference_posterior(const FitResult& fit, const SyntheticDataset& data) {
  std::vector<double> diffs;
  for (std::size_t c = 0; c < fit.n_chains; ++c) {
    for (std::size_t i = 0; i < fit.n_draws; ++i) {
      double sc = 0, sk = 0;
      std::size_t nc = 0, nk = 0;
      for (std::size_t s = 0; s < data.subjects.size(); ++s) {
        const double a = fit.value(c, i, fit.layout.alpha(s));
        if (data.subjects[s].group == Group::Case) {
          sc += a;
          ++nc;
        } else {
          sk += a;
          ++nk;
        }
      }
      diffs.push_back(sc / static_cast<double>(nc) - sk / static_cast<double>(nk));
    }
  }
  return {math::mean(diffs), detail::percentile(diffs, 0.025), detail::percentile(diffs, 0.975)};
}

}  // namespace hbrec
