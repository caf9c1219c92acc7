#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hbrec/fit.hpp"

namespace hbrec {

inline constexpr const char* kFitFormat = "hbrec-fit";
inline constexpr int kFitFormatVersion = 1;

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Non-finite numbers are written as JSON null.
inline std::vector<double> doubles_or_inf(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(x.is_null() ? std::numeric_limits<double>::infinity() : x.get<double>());
  return out;
}

}  // namespace detail

/// Diagnostics and sampler settings of a fit, without the draws.
inline nlohmann::json fit_metadata(const FitResult& fit) {
  using nlohmann::json;
  json chains = json::array();
  for (const auto& c : fit.chains)
    chains.push_back({{"divergences", c.divergences},
                      {"warmup_divergences", c.warmup_divergences},
                      {"mean_accept", c.mean_accept},
                      {"step_size", c.step_size},
                      {"mean_treedepth", c.mean_treedepth},
                      {"treedepth_hits", c.treedepth_hits},
                      {"n_leapfrog", c.n_leapfrog}});
  return {{"format", kFitFormat},
          {"version", kFitFormatVersion},
          {"model", model_number(fit.spec.kind)},
          {"n_subjects", fit.layout.n_subjects},
          {"n_blocks", fit.layout.n_blocks},
          {"parameters", fit.layout.names()},
          {"sampler",
           {{"chains", fit.config.n_chains},
            {"samples", fit.config.n_samples},
            {"warmup", fit.config.n_warmup},
            {"target_accept", fit.config.target_accept},
            {"max_treedepth", fit.config.max_treedepth},
            {"seed", fit.config.seed}}},
          {"n_draws", fit.n_draws},
          {"rhat", fit.rhat},
          {"ess_bulk", fit.ess},
          {"chains", chains},
          {"waic", {{"waic", fit.waic.waic}, {"lppd", fit.waic.lppd}, {"p_waic", fit.waic.p_waic}}},
          {"usable", fit.usable},
          {"retried", fit.retried}};
}

/// Draws as CSV: chain, draw, one column per constrained parameter, divergent flag.
inline void write_draws_csv(const FitResult& fit, std::ostream& out) {
  out << "chain,draw";
  for (const auto& n : fit.layout.names()) out << ',' << n;
  out << ",divergent\n";
  for (std::size_t c = 0; c < fit.n_chains; ++c) {
    for (std::size_t i = 0; i < fit.n_draws; ++i) {
      out << c << ',' << i;
      for (std::size_t k = 0; k < fit.dim(); ++k) out << ',' << detail::fmt17(fit.value(c, i, k));
      out << ',' << static_cast<int>(fit.divergent[c * fit.n_draws + i]) << '\n';
    }
  }
}

/// Writes `<prefix>.draws.csv` and `<prefix>.json`.
inline void save_fit(const FitResult& fit, const std::string& prefix) {
  std::ofstream draws(prefix + ".draws.csv");
  write_draws_csv(fit, draws);
  std::ofstream meta(prefix + ".json");
  meta << fit_metadata(fit).dump(2) << '\n';
  if (!draws || !meta) throw std::runtime_error("save_fit: cannot write " + prefix);
}

/// Reads back draws and diagnostics written by save_fit. Pointwise
/// log-likelihoods are not persisted.
inline FitResult load_fit(const std::string& prefix) {
  std::ifstream meta_in(prefix + ".json");
  if (!meta_in) throw UsageError("load_fit: cannot open " + prefix + ".json");
  const auto meta = nlohmann::json::parse(meta_in);
  if (meta.at("format") != kFitFormat || meta.at("version") != kFitFormatVersion)
    throw UsageError("load_fit: unsupported format in " + prefix + ".json");
  FitResult fit;
  fit.spec.kind = meta.at("model").get<int>() == 1 ? ModelKind::SharedPrior : ModelKind::SeparatePriors;
  fit.layout.n_subjects = meta.at("n_subjects").get<std::size_t>();
  fit.layout.n_blocks = meta.at("n_blocks").get<std::size_t>();
  const auto& s = meta.at("sampler");
  fit.config.n_chains = s.at("chains");
  fit.config.n_samples = s.at("samples");
  fit.config.n_warmup = s.at("warmup");
  fit.config.target_accept = s.at("target_accept");
  fit.config.max_treedepth = s.at("max_treedepth");
  fit.config.seed = s.at("seed");
  fit.n_chains = fit.config.n_chains;
  fit.n_draws = meta.at("n_draws");
  fit.rhat = detail::doubles_or_inf(meta.at("rhat"));
  fit.ess = detail::doubles_or_inf(meta.at("ess_bulk"));
  for (const auto& c : meta.at("chains")) {
    ChainStats st;
    st.divergences = c.at("divergences");
    st.warmup_divergences = c.at("warmup_divergences");
    st.mean_accept = c.at("mean_accept");
    st.step_size = c.at("step_size");
    st.mean_treedepth = c.at("mean_treedepth");
    st.treedepth_hits = c.at("treedepth_hits");
    st.n_leapfrog = c.at("n_leapfrog");
    fit.chains.push_back(st);
  }
  fit.waic = {meta.at("waic").at("waic"), meta.at("waic").at("lppd"), meta.at("waic").at("p_waic")};
  fit.usable = meta.at("usable");
  fit.retried = meta.at("retried");

  std::ifstream in(prefix + ".draws.csv");
  if (!in) throw UsageError("load_fit: cannot open " + prefix + ".draws.csv");
  std::string line;
  std::getline(in, line);
  const std::size_t dim = fit.dim();
  fit.draws.assign(fit.n_chains * fit.n_draws * dim, 0.0);
  fit.divergent.assign(fit.n_chains * fit.n_draws, 0);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const std::size_t c = std::stoul(cell);
    std::getline(ss, cell, ',');
    const std::size_t i = std::stoul(cell);
    if (c >= fit.n_chains || i >= fit.n_draws) throw UsageError("load_fit: draw index out of range");
    for (std::size_t k = 0; k < dim; ++k) {
      std::getline(ss, cell, ',');
      fit.draws[(c * fit.n_draws + i) * dim + k] = std::stod(cell);
    }
    std::getline(ss, cell, ',');
    fit.divergent[c * fit.n_draws + i] = static_cast<std::uint8_t>(std::stoi(cell));
    ++rows;
  }
  if (rows != fit.n_chains * fit.n_draws) throw UsageError("load_fit: draw count does not match metadata");
  return fit;
}

}  // namespace hbrec
