#pragma once

#include "cqr/data_model.hpp"
#include "cqr/qr_core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace cqr {

struct FitConfig {
  int max_iterations = 50;
  int n_starts = 20;
  double start_perturbation_scale = 0.5;
  std::uint64_t seed = 20090401;
};

/// Result of a censored (or uncensored) quantile fit of the null or joint model.
struct PowellFit {
  Eigen::VectorXd coef;
  double objective = 0.0;
  // Row i is predicted uncensored when design_i' coef > c_i (strict).
  std::vector<unsigned char> uncensored_pred_mask;
  // y_i - max(c_i, design_i' coef)
  Eigen::VectorXd residuals;
  int n_iterations = 0;
  int n_starts = 0;
  bool converged = false;
  bool boundary_flag = false;

  std::size_t n_active() const;
};

/// Design, responses and limits of the censored problem in flat form.
struct CensoredProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd y;
  Eigen::VectorXd c;

  static CensoredProblem from(const LongitudinalDataset& data, DesignSelector selector);
};

/// Powell's objective sum rho_tau(y - max(c, design' coef)).
double objective_q(const Eigen::VectorXd& coef, const LongitudinalDataset& data, QuantileLevel tau,
                   DesignSelector selector);
double objective_q(const Eigen::VectorXd& coef, const CensoredProblem& problem, QuantileLevel tau);

/// Multistart iterative convexification: alternate between the predicted
/// uncensored set of the current coefficients and an exact convex quantile
/// fit on that set, accepting only steps that lower the objective.
PowellFit fit_powell(const LongitudinalDataset& data, QuantileLevel tau, const FitConfig& config,
                     DesignSelector selector);
PowellFit fit_powell(const CensoredProblem& problem, QuantileLevel tau, const FitConfig& config);

/// Ordinary quantile regression treating every row as uncensored. The mask
/// is all ones and residuals are y - design' coef.
PowellFit fit_uncensored(const LongitudinalDataset& data, QuantileLevel tau, DesignSelector selector);

struct Interval {
  double lo;
  double hi;
};

/// Exhaustive grid search of objective_q (dimension <= 2). Ties go to the
/// lexicographically smallest grid point.
PowellFit fit_grid_oracle(const LongitudinalDataset& data, QuantileLevel tau, std::span<const Interval> bounds,
                          double step, DesignSelector selector);

/// Mask, residuals and objective implied by `coef`.
PowellFit describe_fit(const CensoredProblem& problem, QuantileLevel tau, Eigen::VectorXd coef);

}  // namespace cqr
