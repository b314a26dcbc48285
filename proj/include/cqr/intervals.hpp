#pragma once

#include "cqr/data_model.hpp"
#include "cqr/powell.hpp"
#include "cqr/rank_score.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cqr {

/// How the null model is fitted before the rank score is computed.
enum class NullFit {
  Censored,   // Powell fit honouring the censoring limits
  Uncensored  // ordinary quantile regression, every row treated as observed
};

struct TestOptions {
  DeltaMode delta_mode = DeltaMode::Estimated;
  NullFit null_fit = NullFit::Censored;
};

enum class IntervalMethod { Inversion, Bootstrap };

const char* to_string(IntervalMethod method) noexcept;

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  IntervalMethod method = IntervalMethod::Inversion;
  std::size_t target = 0;
  double estimate = 0.0;
  // Test evaluations (inversion) or resamples B (bootstrap).
  int n_evaluations = 0;
  int boundary_warnings = 0;
  std::vector<std::string> warnings;

  bool contains(double v) const { return lower <= v && v <= upper; }
  double length() const { return upper - lower; }
};

struct BootstrapConfig {
  int B = 500;
  std::uint64_t seed = 1;
  double level = 0.95;
};

struct BootstrapResult {
  Eigen::VectorXd estimate;                  // joint Powell fit gamma-hat
  std::vector<ConfidenceInterval> intervals;  // one per coefficient of (x, z)
  Eigen::MatrixXd replicates;                // B x (p + q)
  long attempts = 0;                         // resamples drawn, including redraws
};

/// Rank score test of H0: beta = beta0 on y - z'beta0 with limits c - z'beta0.
RankScoreResult test_at_beta0(const LongitudinalDataset& data, QuantileLevel tau, const Eigen::VectorXd& beta0,
                              const FitConfig& config, TestOptions options = {});

/// Set of beta0 for z column `coefficient_index` not rejected at `level`,
/// bracketed by doubling steps from the joint point estimate and refined by
/// bisection. Other z columns are treated as nuisance covariates.
ConfidenceInterval invert_ci(const LongitudinalDataset& data, QuantileLevel tau, std::size_t coefficient_index,
                             double level, const FitConfig& config, TestOptions options = {});

/// Subject-block resampling of the convexified objective
/// sum rho_tau(y# - x#'g) I(x#' gamma_hat > c#).
struct BootstrapDraws {
  Eigen::MatrixXd coef;  // B x d
  long attempts = 0;
};

BootstrapDraws bootstrap_draws(const CensoredProblem& problem, const std::vector<std::size_t>& block_start,
                               const Eigen::VectorXd& gamma_hat, QuantileLevel tau, int B, std::uint64_t seed,
                               int workers = 0);

/// Serial reference for bootstrap_draws; results are bit-identical.
BootstrapDraws bootstrap_draws_serial(const CensoredProblem& problem, const std::vector<std::size_t>& block_start,
                                      const Eigen::VectorXd& gamma_hat, QuantileLevel tau, int B,
                                      std::uint64_t seed);

/// Percentile interval using the lower order statistic at index ceil(B * prob).
ConfidenceInterval percentile_interval(std::vector<double> values, double level);

BootstrapResult block_bootstrap_ci(const LongitudinalDataset& data, QuantileLevel tau, const BootstrapConfig& boot,
                                   const FitConfig& config, int workers = 0);

/// Same as block_bootstrap_ci but starting from an existing joint fit.
BootstrapResult block_bootstrap_ci(const LongitudinalDataset& data, QuantileLevel tau, const BootstrapConfig& boot,
                                   const Eigen::VectorXd& gamma_hat, int workers = 0);

}  // namespace cqr
