#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hbrec {

/// Caller violated a documented precondition (bad index, bad range).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data admits no well-defined answer (e.g. zero pooled variance).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fidelity-checked group sampling gave up.
class RejectionFailure : public std::runtime_error {
 public:
  RejectionFailure(std::size_t attempts, double best_mean_error, double best_sd_error)
      : std::runtime_error("group parameter sampling exhausted " + std::to_string(attempts) +
                           " attempts (best |mean err| = " + std::to_string(best_mean_error) +
                           ", best |sd err| = " + std::to_string(best_sd_error) + ")"),
        attempts_(attempts),
        best_mean_error_(best_mean_error),
        best_sd_error_(best_sd_error) {}

  std::size_t attempts() const noexcept { return attempts_; }
  double best_mean_error() const noexcept { return best_mean_error_; }
  double best_sd_error() const noexcept { return best_sd_error_; }

 private:
  std::size_t attempts_;
  double best_mean_error_;
  double best_sd_error_;
};

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// MCMC could not produce a single non-divergent warmup transition.
class FitFailure : public std::runtime_error {
 public:
  FitFailure(const std::string& what, std::size_t divergences, std::size_t iterations)
      : std::runtime_error(what), divergences_(divergences), iterations_(iterations) {}

  std::size_t divergences() const noexcept { return divergences_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t divergences_;
  std::size_t iterations_;
};

}  // namespace hbrec
