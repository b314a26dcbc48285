#pragma once

#include "cqr/data_model.hpp"
#include "cqr/powell.hpp"
#include "cqr/qr_core.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace cqr {

enum class DeltaMode { Estimated, ForcedIndependence };

const char* to_string(DeltaMode mode) noexcept;

/// Z projected off the span of the predicted-uncensored rows of X.
struct ZStarDecomposition {
  std::vector<unsigned char> active_mask;
  Eigen::MatrixXd zstar;  // n x q, (I - H) Z
  int projection_rank = 0;
  bool rank_deficient = false;
};

struct RankScoreResult {
  Eigen::VectorXd s_n;
  // The dependence parameter plugged into V_n (tau^2 under forced independence).
  double delta_hat = 0.0;
  std::size_t pair_count_L = 0;
  Eigen::MatrixXd v_n;
  double t_n = 0.0;
  int df = 0;
  double p_value = 1.0;
  DeltaMode delta_mode = DeltaMode::Estimated;
  std::vector<std::string> warnings;
};

struct DeltaEstimate {
  double delta_hat = 0.0;
  std::size_t pair_count = 0;
};

/// Inputs of the two-sided local power of the independence-assuming test.
struct LocalPowerSpec {
  double theta = 0.05;  // significance level
  double f0 = 1.0;      // error density at zero
  double mu_n = 0.0;    // design drift n^-1 sum I(active) z* z' beta0 (without f0)
  double v_delta = 1.0;
  double v_indep = 1.0;
};

ZStarDecomposition build_zstar(const LongitudinalDataset& data, const PowellFit& fit);

Eigen::VectorXd compute_sn(const LongitudinalDataset& data, const PowellFit& fit, const ZStarDecomposition& zdec,
                           QuantileLevel tau);

/// Share of ordered within-subject pairs of active rows with both residuals
/// negative. Throws Error(NoPairs) when no subject has two active rows.
DeltaEstimate estimate_delta(const LongitudinalDataset& data, const PowellFit& fit);

Eigen::MatrixXd compute_vn(const LongitudinalDataset& data, const ZStarDecomposition& zdec, QuantileLevel tau,
                           double delta);

/// Rank score statistic T_n = S_n' V_n^-1 S_n with a chi-squared(q) p-value.
/// V_n with condition number above 1e12 is pseudo-inverted and df reduced to
/// its numerical rank.
RankScoreResult qrs_test(const LongitudinalDataset& data, const PowellFit& fit, QuantileLevel tau,
                         DeltaMode mode);

/// V_n(delta) / V_n(tau^2) for scalar z.
double design_effect_ratio(const LongitudinalDataset& data, const ZStarDecomposition& zdec, QuantileLevel tau,
                           double delta);

/// n^-1 sum over active rows of z*_ij z_ij beta0 (scalar z).
double design_drift(const LongitudinalDataset& data, const ZStarDecomposition& zdec, double beta0);

double local_power(const LocalPowerSpec& spec);

}  // namespace cqr
