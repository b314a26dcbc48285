#include "cqr/rank_score.hpp"

#include "cqr/distributions.hpp"
#include "cqr/error.hpp"

#include <cmath>

namespace cqr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(DeltaMode mode) noexcept {
  return mode == DeltaMode::Estimated ? "estimated" : "forced_independence";
}

namespace {

void check_fit(const LongitudinalDataset& data, const PowellFit& fit) {
  if (fit.uncensored_pred_mask.size() != data.n || static_cast<std::size_t>(fit.residuals.size()) != data.n)
    throw Error(ErrorCode::DimensionMismatch, "fit does not belong to this dataset");
}

bool active(const ZStarDecomposition& zdec, std::size_t i) { return zdec.active_mask[i] != 0; }

}  // namespace

ZStarDecomposition build_zstar(const LongitudinalDataset& data, const PowellFit& fit) {
  check_fit(data, fit);
  const FlatData flat = flatten(data);
  MatrixXd xstar = flat.x;
  for (Index i = 0; i < xstar.rows(); ++i)
    if (!fit.uncensored_pred_mask[static_cast<std::size_t>(i)]) xstar.row(i).setZero();

  ZStarDecomposition out;
  out.active_mask = fit.uncensored_pred_mask;
  if (xstar.cols() == 0 || xstar.rows() == 0) {
    out.zstar = flat.z;
    out.rank_deficient = xstar.cols() > 0;
    return out;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(xstar);
  qr.setThreshold(1e-10);
  const Index rank = qr.rank();
  MatrixXd w = qr.householderQ().adjoint() * flat.z;
  w.topRows(rank).setZero();
  out.zstar = qr.householderQ() * w;
  out.projection_rank = static_cast<int>(rank);
  out.rank_deficient = rank < xstar.cols();
  return out;
}

VectorXd compute_sn(const LongitudinalDataset& data, const PowellFit& fit, const ZStarDecomposition& zdec,
                    QuantileLevel tau) {
  check_fit(data, fit);
  VectorXd s = VectorXd::Zero(zdec.zstar.cols());
  for (Index i = 0; i < zdec.zstar.rows(); ++i)
    if (active(zdec, static_cast<std::size_t>(i))) s += zdec.zstar.row(i).transpose() * phi(tau, fit.residuals[i]);
  return s / std::sqrt(static_cast<double>(data.n));
}

DeltaEstimate estimate_delta(const LongitudinalDataset& data, const PowellFit& fit) {
  check_fit(data, fit);
  std::size_t pairs = 0;
  std::size_t both_negative = 0;
  std::size_t i = 0;
  for (const auto& block : data.subjects) {
    std::size_t a = 0, b = 0;
    for (std::size_t j = 0; j < block.rows.size(); ++j, ++i) {
      if (!fit.uncensored_pred_mask[i]) continue;
      ++a;
      if (fit.residuals[static_cast<Index>(i)] < 0.0) ++b;
    }
    if (a > 1) pairs += a * (a - 1);
    if (b > 1) both_negative += b * (b - 1);
  }
  if (pairs == 0) throw Error(ErrorCode::NoPairs, "no subject has two predicted-uncensored observations");
  return {static_cast<double>(both_negative) / static_cast<double>(pairs), pairs};
}

MatrixXd compute_vn(const LongitudinalDataset& data, const ZStarDecomposition& zdec, QuantileLevel tau,
                    double delta) {
  const double t = tau.value();
  const Index q = zdec.zstar.cols();
  MatrixXd diag = MatrixXd::Zero(q, q);
  MatrixXd cross = MatrixXd::Zero(q, q);
  std::size_t i = 0;
  for (const auto& block : data.subjects) {
    VectorXd sum = VectorXd::Zero(q);
    MatrixXd own = MatrixXd::Zero(q, q);
    for (std::size_t j = 0; j < block.rows.size(); ++j, ++i) {
      if (!active(zdec, i)) continue;
      const auto z = zdec.zstar.row(static_cast<Index>(i)).transpose();
      own.noalias() += z * z.transpose();
      sum += z;
    }
    diag += own;
    // sum over ordered pairs j != j' of z_j z_j'^T
    cross.noalias() += sum * sum.transpose() - own;
  }
  MatrixXd v = (t * (1.0 - t)) * diag + (delta - t * t) * cross;
  return v / static_cast<double>(data.n);
}

RankScoreResult qrs_test(const LongitudinalDataset& data, const PowellFit& fit, QuantileLevel tau,
                         DeltaMode mode) {
  if (data.q == 0) throw Error(ErrorCode::InvalidArgument, "rank score test needs at least one z column");
  RankScoreResult r;
  const ZStarDecomposition zdec = build_zstar(data, fit);
  if (zdec.rank_deficient) r.warnings.emplace_back("active x design is rank deficient; projection uses its numerical rank");
  r.s_n = compute_sn(data, fit, zdec, tau);

  const double t = tau.value();
  r.delta_mode = mode;
  r.delta_hat = t * t;
  if (mode == DeltaMode::Estimated) {
    try {
      const DeltaEstimate est = estimate_delta(data, fit);
      r.delta_hat = est.delta_hat;
      r.pair_count_L = est.pair_count;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoPairs) throw;
      r.delta_mode = DeltaMode::ForcedIndependence;
      r.warnings.emplace_back("no within-subject pairs; delta set to tau^2");
    }
  }
  r.v_n = compute_vn(data, zdec, tau, r.delta_hat);

  const auto q = static_cast<int>(r.v_n.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r.v_n);
  const VectorXd& lambda = eig.eigenvalues();  // ascending
  const double lmax = lambda[q - 1];
  if (!(lmax > 0.0)) {
    r.t_n = 0.0;
    r.df = 0;
    r.p_value = 1.0;
    r.warnings.emplace_back("V_n is zero; statistic undefined, reported as 0");
    return r;
  }
  if (q == 1 && lmax > 0.0) {
    r.t_n = r.s_n[0] * r.s_n[0] / r.v_n(0, 0);
    r.df = 1;
  } else if (lambda[0] > 1e-12 * lmax) {
    r.t_n = r.s_n.dot(r.v_n.llt().solve(r.s_n));
    r.df = q;
  } else {
    const VectorXd proj = eig.eigenvectors().transpose() * r.s_n;
    r.t_n = 0.0;
    r.df = 0;
    for (int k = 0; k < q; ++k) {
      if (lambda[k] > 1e-12 * lmax) {
        r.t_n += proj[k] * proj[k] / lambda[k];
        ++r.df;
      }
    }
    r.warnings.emplace_back("V_n is numerically singular; pseudo-inverse with df = " + std::to_string(r.df));
  }
  r.t_n = std::max(0.0, r.t_n);
  r.p_value = chi2_sf(r.t_n, r.df);
  return r;
}

double design_effect_ratio(const LongitudinalDataset& data, const ZStarDecomposition& zdec, QuantileLevel tau,
                           double delta) {
  if (zdec.zstar.cols() != 1) throw Error(ErrorCode::NotScalar, "design effect ratio needs a single z column");
  const double t = tau.value();
  const double indep = compute_vn(data, zdec, tau, t * t)(0, 0);
  if (!(indep > 0.0)) throw Error(ErrorCode::ZeroDenominator, "V_n(tau^2) is zero");
  return compute_vn(data, zdec, tau, delta)(0, 0) / indep;
}

double design_drift(const LongitudinalDataset& data, const ZStarDecomposition& zdec, double beta0) {
  if (zdec.zstar.cols() != 1) throw Error(ErrorCode::NotScalar, "design drift needs a single z column");
  const FlatData flat = flatten(data);
  double s = 0.0;
  for (Index i = 0; i < flat.rows(); ++i)
    if (active(zdec, static_cast<std::size_t>(i))) s += zdec.zstar(i, 0) * flat.z(i, 0) * beta0;
  return s / static_cast<double>(data.n);
}

double local_power(const LocalPowerSpec& spec) {
  if (!(spec.theta > 0.0 && spec.theta < 1.0) || !(spec.f0 > 0.0) || !(spec.v_delta > 0.0) ||
      !(spec.v_indep > 0.0))
    throw Error(ErrorCode::InvalidArgument, "local power needs theta in (0,1) and positive f0 and variances");
  const double z = normal_quantile(1.0 - 0.5 * spec.theta);
  const double ratio = std::sqrt(spec.v_indep / spec.v_delta);
  const double shift = spec.f0 * spec.mu_n / std::sqrt(spec.v_delta);
  return 1.0 - normal_cdf(z * ratio - shift) + normal_cdf(-z * ratio - shift);
}

}  // namespace cqr
