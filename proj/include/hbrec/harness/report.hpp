#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hbrec/harness/jobs.hpp"

namespace hbrec::harness {

namespace detail {

/// "NA" for NaN, otherwise %.10g.
inline std::string cell(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fixed2(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

/// Over/under-estimation keeps an explicit sign; zero renders unsigned.
inline std::string signed2(double v) {
  if (std::isnan(v)) return "NA";
  const std::string s = fixed2(v);
  if (s == "0.00") return s;
  return v > 0 ? "+" + s : s;
}

using CsvRow = std::map<std::string, std::string>;

inline std::vector<CsvRow> read_csv(const fs::path& path) {
  std::vector<CsvRow> rows;
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string c;
    while (std::getline(ss, c, ',')) out.push_back(c);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) return rows;
  header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    CsvRow row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = i < cells.size() ? cells[i] : "NA";
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double parse_cell(const CsvRow& row, const std::string& key) {
  auto it = row.find(key);
  if (it == row.end() || it->second == "NA" || it->second.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(it->second);
}

/// Left-aligned first column, right-aligned others, two spaces apart.
inline std::string aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string pad(width[i] - r[i].size(), ' ');
      if (i == 0) line += r[i] + pad;
      else line += "  " + pad + r[i];
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace detail

inline std::string perturbation_title(std::size_t subjects, std::size_t trials) {
  return std::to_string(subjects) + " subj. " + std::to_string(trials) + " trials";
}

/// Table 1 (FPR / FNR / F1 with CI half-widths per model, at the richest
/// perturbation), Table 2 (signed ES error per model x perturbation) and
/// scatter data, from results/aggregate.csv and results/recovery.csv.
/// Missing entries render as NA. Returns the files written.
inline std::vector<std::string> render_tables(const fs::path& root) {
  using namespace detail;
  std::vector<CsvRow> agg;
  if (fs::exists(root / kAggregateCsv)) agg = read_csv(root / kAggregateCsv);

  // Perturbation columns in order of first appearance.
  std::vector<std::pair<std::size_t, std::size_t>> perts;
  for (const auto& r : agg) {
    const std::pair<std::size_t, std::size_t> key{std::stoul(r.at("n_subjects")), std::stoul(r.at("n_trials"))};
    if (std::find(perts.begin(), perts.end(), key) == perts.end()) perts.push_back(key);
  }
  auto find_row = [&](int model, std::pair<std::size_t, std::size_t> p) -> const CsvRow* {
    for (const auto& r : agg)
      if (r.at("model") == std::to_string(model) && std::stoul(r.at("n_subjects")) == p.first &&
          std::stoul(r.at("n_trials")) == p.second)
        return &r;
    return nullptr;
  };
  const CsvRow empty;

  std::vector<std::string> written;
  // Table 1
  {
    std::pair<std::size_t, std::size_t> best{0, 0};
    for (const auto& p : perts)
      if (p.first * p.second > best.first * best.second) best = p;
    const std::string title = perts.empty() ? "NA" : perturbation_title(best.first, best.second);
    std::string csv = "model,perturbation,fpr_pct,fpr_ci,fnr_pct,fnr_ci,f1_pct,f1_ci\n";
    std::vector<std::vector<std::string>> txt{{title, "False Pos. Rate (%)", "False Neg. Rate (%)", "F1-Score (%)"}};
    for (int m : {1, 2}) {
      const CsvRow* row = perts.empty() ? nullptr : find_row(m, best);
      const CsvRow& r = row ? *row : empty;
      std::vector<std::string> t{"Model " + std::to_string(m)};
      csv += std::to_string(m) + "," + title;
      for (const char* k : {"fpr", "fnr", "f1"}) {
        const double v = parse_cell(r, std::string(k) + "_pct");
        const double ci = parse_cell(r, std::string(k) + "_ci");
        csv += "," + fixed2(v) + "," + fixed2(ci);
        t.push_back(fixed2(v) + " [+/- " + fixed2(ci) + "]");
      }
      csv += "\n";
      txt.push_back(t);
    }
    write_file_atomic(root / "tables/table1.csv", csv);
    write_file_atomic(root / "tables/table1.txt", aligned(txt));
    written.insert(written.end(), {"tables/table1.csv", "tables/table1.txt"});
  }
  // Table 2
  {
    std::string csv = "model";
    std::vector<std::vector<std::string>> txt{{"E.S. error (%)"}};
    for (const auto& p : perts) {
      csv += "," + perturbation_title(p.first, p.second);
      txt[0].push_back(perturbation_title(p.first, p.second));
    }
    csv += "\n";
    for (int m : {1, 2}) {
      csv += "Model " + std::to_string(m);
      std::vector<std::string> t{"Model " + std::to_string(m)};
      for (const auto& p : perts) {
        const CsvRow* row = find_row(m, p);
        const std::string v = signed2(row ? parse_cell(*row, "es_error_weighted_pct") : std::nan(""));
        csv += "," + v;
        t.push_back(v);
      }
      csv += "\n";
      txt.push_back(t);
    }
    write_file_atomic(root / "tables/table2.csv", csv);
    write_file_atomic(root / "tables/table2.txt", aligned(txt));
    written.insert(written.end(), {"tables/table2.csv", "tables/table2.txt"});
  }
  // Scatter data: true vs recovered d per dataset and model.
  {
    std::string csv = "cell,resample,n_subjects,n_trials,model,true_d,recovered_d\n";
    if (fs::exists(root / kRecoveryCsv))
      for (const auto& r : read_csv(root / kRecoveryCsv))
        csv += r.at("cell") + "," + r.at("resample") + "," + r.at("n_subjects") + "," + r.at("n_trials") + "," +
               r.at("model") + "," + r.at("true_d") + "," + r.at("recovered_d") + "\n";
    write_file_atomic(root / "tables/scatter.csv", csv);
    written.push_back("tables/scatter.csv");
  }
  return written;
}

/// Collects every metrics file of the plan into the result CSVs, then
/// renders the tables. Missing metrics leave gaps rather than failing.
inline std::vector<std::string> run_aggregate(const RunConfig& cfg, const fs::path& root, const std::vector<Job>& all) {
  using namespace detail;
  const std::size_t n_pert = cfg.perturbations.size();
  // [model][perturbation] reports, paired by dataset across models
  std::vector<std::vector<std::vector<RecoveryReport>>> reports(2, std::vector<std::vector<RecoveryReport>>(n_pert));
  std::vector<std::vector<double>> rhos(2, std::vector<double>(n_pert, 0.0));
  std::vector<std::vector<std::size_t>> rho_n(2, std::vector<std::size_t>(n_pert, 0));

  std::string recovery =
      "cell,case_mode,control_mode,concentration,resample,perturbation,n_subjects,n_trials,model,truth_differs,"
      "true_d,recovered_d,es_error_pct,detected,usable,retried,rho,waic,max_rhat,divergences\n";
  std::string waic_csv = "cell,resample,perturbation,n_subjects,n_trials,waic_m1,waic_m2,delta_waic,preferred\n";
  // (cell, perturbation) -> {m1 preferred, m2 preferred}
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>> prefs;

  for (const auto& job : all) {
    if (job.kind != JobKind::Metrics) continue;
    const fs::path path = root / metrics_path(job.cell, job.resample, job.perturbation);
    if (!fs::exists(path)) continue;
    const auto j = read_json(path);
    const std::string head = std::to_string(job.cell) + "," + cell(j.at("case_mode")) + "," +
                             cell(j.at("control_mode")) + "," + cell(j.at("concentration")) + "," +
                             std::to_string(job.resample) + "," + std::to_string(job.perturbation + 1) + "," +
                             std::to_string(j.at("n_subjects").get<std::size_t>()) + "," +
                             std::to_string(j.at("n_trials").get<std::size_t>());
    const bool truth = j.at("truth_differs");
    const double true_d = num_or_nan(j.at("true_d"));
    double w[2] = {std::nan(""), std::nan("")};
    for (const auto& m : j.at("models")) {
      const int model = m.at("model");
      RecoveryReport r;
      r.true_d = true_d;
      r.recovered_d = num_or_nan(m.at("recovered_d"));
      r.es_error_pct = num_or_nan(m.at("es_error_pct"));
      r.detected = m.at("detected");
      r.truth_differs = truth;
      r.fit_usable = m.at("usable");
      reports[model - 1][job.perturbation].push_back(r);
      const double rho = num_or_nan(m.at("rho"));
      if (!std::isnan(rho)) {
        rhos[model - 1][job.perturbation] += rho;
        ++rho_n[model - 1][job.perturbation];
      }
      w[model - 1] = num_or_nan(m.at("waic"));
      recovery += head + "," + std::to_string(model) + "," + (truth ? "1" : "0") + "," + cell(true_d) + "," +
                  cell(r.recovered_d) + "," + cell(r.es_error_pct) + "," + (r.detected ? "1" : "0") + "," +
                  (r.fit_usable ? "1" : "0") + "," + (m.at("retried").get<bool>() ? "1" : "0") + "," + cell(rho) +
                  "," + cell(w[model - 1]) + "," + cell(num_or_nan(m.at("max_rhat"))) + "," +
                  std::to_string(m.at("divergences").get<std::size_t>()) + "\n";
    }
    const double delta = w[0] - w[1];
    const char* preferred = std::isnan(delta) ? "NA" : (delta < 0 ? "1" : (delta > 0 ? "2" : "tie"));
    waic_csv += std::to_string(job.cell) + "," + std::to_string(job.resample) + "," +
                std::to_string(job.perturbation + 1) + "," + std::to_string(j.at("n_subjects").get<std::size_t>()) +
                "," + std::to_string(j.at("n_trials").get<std::size_t>()) + "," + cell(w[0]) + "," + cell(w[1]) +
                "," + cell(delta) + "," + preferred + "\n";
    if (!std::isnan(delta)) {
      auto& p = prefs[{job.cell, job.perturbation}];
      (delta < 0 ? p.first : p.second) += delta != 0;
    }
  }

  std::string aggregate_csv =
      "model,perturbation,n_subjects,n_trials,n_datasets,n_usable,fpr_pct,fpr_ci,fnr_pct,fnr_ci,f1_pct,f1_ci,"
      "es_error_weighted_pct,es_error_mean_pct,es_error_median_pct,mean_rho\n";
  for (int m = 0; m < 2; ++m) {
    for (std::size_t p = 0; p < n_pert; ++p) {
      const auto& pt = cfg.perturbations[p];
      std::string row = std::to_string(m + 1) + "," + std::to_string(p + 1) + "," + std::to_string(pt.n_subjects) +
                        "," + std::to_string(pt.n_trials) + ",";
      const auto& rs = reports[m][p];
      if (rs.empty()) {
        row += "0,0,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA";
      } else {
        const auto a = aggregate(rs, cfg.n_bootstrap);
        const double mean_rho = rho_n[m][p] ? rhos[m][p] / static_cast<double>(rho_n[m][p]) : std::nan("");
        row += std::to_string(a.n_resamples) + "," + std::to_string(a.n_usable) + "," + cell(a.fpr_pct) + "," +
               cell(a.fpr_ci) + "," + cell(a.fnr_pct) + "," + cell(a.fnr_ci) + "," + cell(a.f1_pct) + "," +
               cell(a.f1_ci) + "," + cell(a.es_error_weighted_pct) + "," + cell(a.es_error_mean_pct) + "," +
               cell(a.es_error_median_pct) + "," + cell(mean_rho);
      }
      aggregate_csv += row + "\n";
    }
  }

  std::string comparisons = "scope,metric,estimate,lo,hi,excludes_zero\n";
  auto add_comparison = [&](const std::string& scope, const std::vector<RecoveryReport>& m1,
                            const std::vector<RecoveryReport>& m2) {
    if (m1.empty() || m1.size() != m2.size()) {
      for (const char* k : {"f1", "fnr", "fpr"}) comparisons += scope + "," + k + ",NA,NA,NA,NA\n";
      return;
    }
    const auto c = compare_models(m1, m2, cfg.n_bootstrap);
    for (const auto& [k, d] : {std::pair{"f1", c.f1}, std::pair{"fnr", c.fnr}, std::pair{"fpr", c.fpr}})
      comparisons += scope + "," + k + "," + cell(d.estimate) + "," + cell(d.lo) + "," + cell(d.hi) + "," +
                     (std::isnan(d.lo) ? "NA" : (d.excludes_zero() ? "1" : "0")) + "\n";
  };
  std::vector<RecoveryReport> pooled1, pooled2;
  for (std::size_t p = 0; p < n_pert; ++p) {
    add_comparison(cfg.perturbations[p].label(), reports[0][p], reports[1][p]);
    pooled1.insert(pooled1.end(), reports[0][p].begin(), reports[0][p].end());
    pooled2.insert(pooled2.end(), reports[1][p].begin(), reports[1][p].end());
  }
  add_comparison("pooled", pooled1, pooled2);

  std::string waic_summary = "cell,perturbation,n,m1_preferred,m2_preferred,minority_fraction\n";
  for (const auto& [key, p] : prefs) {
    const std::size_t n = p.first + p.second;
    waic_summary += std::to_string(key.first) + "," + std::to_string(key.second + 1) + "," + std::to_string(n) + "," +
                    std::to_string(p.first) + "," + std::to_string(p.second) + "," +
                    cell(n ? static_cast<double>(std::min(p.first, p.second)) / static_cast<double>(n) : std::nan("")) +
                    "\n";
  }

  write_file_atomic(root / kRecoveryCsv, recovery);
  write_file_atomic(root / kAggregateCsv, aggregate_csv);
  write_file_atomic(root / kWaicCsv, waic_csv);
  write_file_atomic(root / kWaicSummaryCsv, waic_summary);
  write_file_atomic(root / kComparisonsCsv, comparisons);
  std::vector<std::string> out{kRecoveryCsv, kAggregateCsv, kWaicCsv, kWaicSummaryCsv, kComparisonsCsv};
  const auto tables = render_tables(root);
  out.insert(out.end(), tables.begin(), tables.end());
  return out;
}

}  // namespace hbrec::harness
