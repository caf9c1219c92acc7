#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "hbrec/beta_spec.hpp"
#include "hbrec/dataset.hpp"
#include "hbrec/errors.hpp"
#include "hbrec/likelihood.hpp"
#include "hbrec/math.hpp"
#include "hbrec/rng.hpp"
#include "hbrec/subject_fit.hpp"

namespace hbrec {

namespace detail {
// Overflow during sampler exploration must surface as non-finite, not throw.
using QuietPolicy = boost::math::policies::policy<
    boost::math::policies::domain_error<boost::math::policies::ignore_error>,
    boost::math::policies::pole_error<boost::math::policies::ignore_error>,
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::ignore_error>>;
inline constexpr QuietPolicy kQuiet{};
}  // namespace detail

enum class ModelKind {
  SharedPrior,     ///< Model 1: every subject under one group-level prior
  SeparatePriors,  ///< Model 2: case and control each get their own prior
};

inline const char* to_string(ModelKind k) noexcept { return k == ModelKind::SharedPrior ? "shared" : "separate"; }
inline int model_number(ModelKind k) noexcept { return k == ModelKind::SharedPrior ? 1 : 2; }

/// Hyperpriors shared by both model kinds:
///   omega ~ Beta(omega_prior), log(kappa - 2) ~ Normal(log_kappa_mean, log_kappa_sd).
struct Hyperpriors {
  BetaSpec omega_prior{0.5, 2.0};
  double log_kappa_mean = std::log(8.0);
  double log_kappa_sd = 1.0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::SeparatePriors;
  Hyperpriors hyper;
  double v0 = kDefaultInitialValue;
  double param_clamp = 0.05;  ///< ML-based init is clamped into [param_clamp, 1 - param_clamp]
};

/// Index map of the unconstrained parameter vector:
///   [2i]   logit(alpha_i)       [2i+1] logit(tau_i)
///   [2N + 4b + 0] logit(omega_alpha_b)   [+1] log(kappa_alpha_b - 2)
///   [2N + 4b + 2] logit(omega_tau_b)     [+3] log(kappa_tau_b - 2)
/// Model 1 has one prior block; Model 2 has block 0 = case, block 1 = control.
struct ParameterLayout {
  std::size_t n_subjects = 0;
  std::size_t n_blocks = 1;

  std::size_t dimension() const noexcept { return 2 * n_subjects + 4 * n_blocks; }
  std::size_t alpha(std::size_t i) const noexcept { return 2 * i; }
  std::size_t tau(std::size_t i) const noexcept { return 2 * i + 1; }
  std::size_t block(std::size_t b) const noexcept { return 2 * n_subjects + 4 * b; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n_subjects; ++i) {
      out.push_back("alpha." + std::to_string(i));
      out.push_back("tau." + std::to_string(i));
    }
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const auto s = std::to_string(b);
      out.push_back("omega_alpha." + s);
      out.push_back("kappa_alpha." + s);
      out.push_back("omega_tau." + s);
      out.push_back("kappa_tau." + s);
    }
    return out;
  }
};

struct BlockParams {
  double omega_alpha, kappa_alpha, omega_tau, kappa_tau;
};

struct ConstrainedParams {
  std::vector<double> alpha;
  std::vector<double> tau;
  std::vector<BlockParams> blocks;
};

inline ConstrainedParams constrain(const ParameterLayout& layout, std::span<const double> theta) {
  ConstrainedParams c;
  c.alpha.resize(layout.n_subjects);
  c.tau.resize(layout.n_subjects);
  for (std::size_t i = 0; i < layout.n_subjects; ++i) {
    c.alpha[i] = math::logistic(theta[layout.alpha(i)]);
    c.tau[i] = math::logistic(theta[layout.tau(i)]);
  }
  for (std::size_t b = 0; b < layout.n_blocks; ++b) {
    const std::size_t k = layout.block(b);
    c.blocks.push_back({math::logistic(theta[k]), 2.0 + std::exp(theta[k + 1]), math::logistic(theta[k + 2]),
                        2.0 + std::exp(theta[k + 3])});
  }
  return c;
}

inline std::vector<double> unconstrain(const ParameterLayout& layout, const ConstrainedParams& c) {
  std::vector<double> theta(layout.dimension());
  for (std::size_t i = 0; i < layout.n_subjects; ++i) {
    theta[layout.alpha(i)] = math::logit(c.alpha[i]);
    theta[layout.tau(i)] = math::logit(c.tau[i]);
  }
  for (std::size_t b = 0; b < layout.n_blocks; ++b) {
    const std::size_t k = layout.block(b);
    theta[k] = math::logit(c.blocks[b].omega_alpha);
    theta[k + 1] = std::log(c.blocks[b].kappa_alpha - 2.0);
    theta[k + 2] = math::logit(c.blocks[b].omega_tau);
    theta[k + 3] = std::log(c.blocks[b].kappa_tau - 2.0);
  }
  return theta;
}

struct LogDensityResult {
  double log_posterior = math::kNegInf;
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  double log_jacobian = 0.0;
  bool finite = false;  ///< false: some intermediate was non-finite; gradient zeroed
  std::vector<double> gradient;
  std::vector<double> pointwise_loglik;  ///< subject-major, one entry per recorded trial
};

/// Log posterior of one hierarchical model over unconstrained parameters.
/// Holds a reference to the dataset, which must outlive it. Cheap to copy;
/// each copy is an independent evaluation context.
class HierarchicalPosterior {
 public:
  HierarchicalPosterior(ModelSpec spec, const SyntheticDataset& data) : spec_(std::move(spec)), data_(&data) {
    if (data.subjects.empty()) throw UsageError("HierarchicalPosterior: dataset has no subjects");
    layout_.n_subjects = data.subjects.size();
    layout_.n_blocks = spec_.kind == ModelKind::SharedPrior ? 1 : 2;
    block_of_.resize(layout_.n_subjects);
    for (std::size_t i = 0; i < layout_.n_subjects; ++i) {
      block_of_[i] = spec_.kind == ModelKind::SharedPrior ? 0 : static_cast<std::size_t>(data.subjects[i].group);
      n_points_ += data.subjects[i].history.choices.size();
    }
    const auto h = beta_shapes(spec_.hyper.omega_prior);
    omega_a_ = h.a;
    omega_b_ = h.b;
    omega_lbeta_ = lbeta(h.a, h.b);
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParameterLayout& layout() const noexcept { return layout_; }
  const SyntheticDataset& data() const noexcept { return *data_; }
  std::size_t dimension() const noexcept { return layout_.dimension(); }
  std::size_t n_points() const noexcept { return n_points_; }
  std::size_t block_of(std::size_t subject) const noexcept { return block_of_[subject]; }

  LogDensityResult log_density(std::span<const double> theta, bool with_pointwise = false) const {
    check_dim(theta);
    LogDensityResult r;
    r.gradient.assign(dimension(), 0.0);
    if (with_pointwise) r.pointwise_loglik.assign(n_points_, 0.0);
    const Components c = evaluate<true>(theta, r.gradient, r.pointwise_loglik);
    r.log_likelihood = c.lik;
    r.log_prior = c.prior;
    r.log_jacobian = c.jac;
    r.finite = finalize(c, r.gradient);
    r.log_posterior = r.finite ? c.lik + c.prior + c.jac : math::kNegInf;
    return r;
  }

  /// Sampler entry point: writes the gradient and returns the log density
  /// (-inf with zero gradient on non-finite intermediates).
  double log_density_gradient(std::span<const double> theta, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    const Components c = evaluate<true>(theta, grad, {});
    return finalize(c, grad) ? c.lik + c.prior + c.jac : math::kNegInf;
  }

  double log_density_value(std::span<const double> theta) const {
    const Components c = evaluate<false>(theta, {}, {});
    const double v = c.lik + c.prior + c.jac;
    return std::isfinite(v) ? v : math::kNegInf;
  }

  /// Per-trial choice log-likelihoods only (no priors, no gradient).
  void pointwise_loglik(std::span<const double> theta, std::span<double> out) const {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layout_.n_subjects; ++i) {
      const auto& h = data_->subjects[i].history;
      const std::size_t n = h.choices.size();
      subject_loglik<false>(h.choices, h.rewards, data_->n_arms(), spec_.v0,
                            math::logistic(theta[layout_.alpha(i)]), math::logistic(theta[layout_.tau(i)]),
                            out.subspan(offset, n));
      offset += n;
    }
  }

 private:
  struct Components {
    double lik = 0.0;
    double prior = 0.0;
    double jac = 0.0;
  };

  static double lbeta(double a, double b) {
    return boost::math::lgamma(a, detail::kQuiet) + boost::math::lgamma(b, detail::kQuiet) - boost::math::lgamma(a + b, detail::kQuiet);
  }

  void check_dim(std::span<const double> theta) const {
    if (theta.size() != dimension()) throw UsageError("log_density: parameter vector has wrong dimension");
  }

  static bool finalize(const Components& c, std::span<double> grad) {
    bool ok = std::isfinite(c.lik + c.prior + c.jac);
    for (double g : grad) ok = ok && std::isfinite(g);
    if (!ok) std::fill(grad.begin(), grad.end(), 0.0);
    return ok;
  }

  template <bool Gradient>
  Components evaluate(std::span<const double> theta, std::span<double> grad, std::span<double> pointwise) const {
    const bool want_grad = Gradient && !grad.empty();
    Components c;
    struct BlockState {
      double om_a, k_a, om_t, k_t;  // constrained hyperparameters
      double a_a, b_a, a_t, b_t;    // Beta shapes for alpha and tau
      double sum_log_a = 0, sum_log1m_a = 0, sum_log_t = 0, sum_log1m_t = 0;
      std::size_t n = 0;
    };
    BlockState blocks[2];
    for (std::size_t b = 0; b < layout_.n_blocks; ++b) {
      const std::size_t k = layout_.block(b);
      auto& s = blocks[b];
      s.om_a = math::logistic(theta[k]);
      s.k_a = 2.0 + std::exp(theta[k + 1]);
      s.om_t = math::logistic(theta[k + 2]);
      s.k_t = 2.0 + std::exp(theta[k + 3]);
      s.a_a = s.om_a * (s.k_a - 2.0) + 1.0;
      s.b_a = (1.0 - s.om_a) * (s.k_a - 2.0) + 1.0;
      s.a_t = s.om_t * (s.k_t - 2.0) + 1.0;
      s.b_t = (1.0 - s.om_t) * (s.k_t - 2.0) + 1.0;
    }

    std::size_t offset = 0;
    for (std::size_t i = 0; i < layout_.n_subjects; ++i) {
      const auto& h = data_->subjects[i].history;
      const std::size_t n = h.choices.size();
      const double ua = theta[layout_.alpha(i)];
      const double ut = theta[layout_.tau(i)];
      const double alpha = math::logistic(ua);
      const double tau = math::logistic(ut);
      const double log_a = math::log_logistic(ua), log1m_a = math::log_logistic(-ua);
      const double log_t = math::log_logistic(ut), log1m_t = math::log_logistic(-ut);
      const auto ll = subject_loglik<Gradient>(h.choices, h.rewards, data_->n_arms(), spec_.v0, alpha, tau,
                                               pointwise.empty() ? std::span<double>{} : pointwise.subspan(offset, n));
      offset += n;
      auto& s = blocks[block_of_[i]];
      c.lik += ll.value;
      c.prior += (s.a_a - 1.0) * log_a + (s.b_a - 1.0) * log1m_a + (s.a_t - 1.0) * log_t + (s.b_t - 1.0) * log1m_t;
      c.jac += log_a + log1m_a + log_t + log1m_t;
      s.sum_log_a += log_a;
      s.sum_log1m_a += log1m_a;
      s.sum_log_t += log_t;
      s.sum_log1m_t += log1m_t;
      ++s.n;
      if (want_grad) {
        grad[layout_.alpha(i)] = ll.d_alpha * alpha * (1.0 - alpha) + s.a_a * (1.0 - alpha) - s.b_a * alpha;
        grad[layout_.tau(i)] = ll.d_tau * tau * (1.0 - tau) + s.a_t * (1.0 - tau) - s.b_t * tau;
      }
    }

    const double mu = spec_.hyper.log_kappa_mean;
    const double sigma = spec_.hyper.log_kappa_sd;
    const double log_norm = std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi);
    for (std::size_t b = 0; b < layout_.n_blocks; ++b) {
      const std::size_t k = layout_.block(b);
      const auto& s = blocks[b];
      const auto nb = static_cast<double>(s.n);
      c.prior -= nb * (lbeta(s.a_a, s.b_a) + lbeta(s.a_t, s.b_t));

      // omega ~ Beta(omega_prior) with logit Jacobian; (kappa - 2) ~ LogNormal with log Jacobian.
      const double eta_a = theta[k + 1], eta_t = theta[k + 3];
      for (const auto& [om, eta] : {std::pair{s.om_a, eta_a}, std::pair{s.om_t, eta_t}}) {
        c.prior += (omega_a_ - 1.0) * std::log(om) + (omega_b_ - 1.0) * std::log1p(-om) - omega_lbeta_;
        c.jac += std::log(om) + std::log1p(-om);
        c.prior += -eta - log_norm - 0.5 * (eta - mu) * (eta - mu) / (sigma * sigma);
        c.jac += eta;
      }

      if (want_grad) {
        auto hyper_grad = [&](double om, double kappa, double eta, double a, double bb, double sum_log,
                              double sum_log1m, double* g_omega, double* g_eta) {
          const double psi_ab = boost::math::digamma(a + bb, detail::kQuiet);
          const double d_a = sum_log - nb * (boost::math::digamma(a, detail::kQuiet) - psi_ab);
          const double d_b = sum_log1m - nb * (boost::math::digamma(bb, detail::kQuiet) - psi_ab);
          const double d_omega = (kappa - 2.0) * (d_a - d_b);
          const double d_kappa = om * d_a + (1.0 - om) * d_b;
          *g_omega = d_omega * om * (1.0 - om) + omega_a_ * (1.0 - om) - omega_b_ * om;
          *g_eta = d_kappa * (kappa - 2.0) - (eta - mu) / (sigma * sigma);
        };
        hyper_grad(s.om_a, s.k_a, eta_a, s.a_a, s.b_a, s.sum_log_a, s.sum_log1m_a, &grad[k], &grad[k + 1]);
        hyper_grad(s.om_t, s.k_t, eta_t, s.a_t, s.b_t, s.sum_log_t, s.sum_log1m_t, &grad[k + 2], &grad[k + 3]);
      }
    }
    return c;
  }

  ModelSpec spec_;
  const SyntheticDataset* data_;
  ParameterLayout layout_;
  std::vector<std::size_t> block_of_;
  std::size_t n_points_ = 0;
  double omega_a_ = 1.0, omega_b_ = 1.0, omega_lbeta_ = 0.0;
};

/// Starting point: per-subject ML estimates (clamped) for subject parameters,
/// omega = 0.5 and kappa = 3 for every block, plus uniform jitter in
/// [-jitter, jitter]. Retries the jitter until the density is finite.
inline std::vector<double> init_point(const HierarchicalPosterior& post, Rng& rng, double jitter) {
  if (!(jitter >= 0.0)) throw UsageError("init_point: jitter must be >= 0");
  const auto& layout = post.layout();
  const auto& data = post.data();
  const double lo = post.spec().param_clamp;
  const double hi = 1.0 - lo;
  std::vector<double> base(layout.dimension(), 0.0);
  for (std::size_t i = 0; i < layout.n_subjects; ++i) {
    const auto& h = data.subjects[i].history;
    const auto mle = fit_subject_mle(h.choices, h.rewards, data.n_arms(), post.spec().v0);
    base[layout.alpha(i)] = math::logit(std::clamp(mle.alpha, lo, hi));
    base[layout.tau(i)] = math::logit(std::clamp(mle.tau, lo, hi));
  }
  // Hyperparameters: logit(0.5) = 0 and log(3 - 2) = 0 are already in place.
  std::uniform_real_distribution<double> u(-jitter, jitter);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> theta = base;
    if (jitter > 0)
      for (double& x : theta) x += u(rng);
    if (std::isfinite(post.log_density_value(theta))) return theta;
  }
  throw InitializationError("init_point: no finite starting point after 100 jittered attempts");
}

}  // namespace hbrec
