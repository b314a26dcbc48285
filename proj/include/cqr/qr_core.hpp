#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace cqr {

/// A quantile level tau in the open interval (0, 1).
class QuantileLevel {
 public:
  explicit QuantileLevel(double tau);
  double value() const noexcept { return tau_; }

 private:
  double tau_;
};

/// Check loss rho_tau(u) = u * (tau - I(u < 0)).
inline double rho(QuantileLevel tau, double u) noexcept {
  return u * (tau.value() - (u < 0.0 ? 1.0 : 0.0));
}

/// Quantile score phi_tau(u) = tau - I(u < 0); phi_tau(0) = tau.
inline double phi(QuantileLevel tau, double u) noexcept {
  return tau.value() - (u < 0.0 ? 1.0 : 0.0);
}

struct ConvexQrProblem {
  Eigen::MatrixXd design;  // n x d
  Eigen::VectorXd response;
  // Empty means every row is active.
  std::vector<unsigned char> active;
  QuantileLevel tau{0.5};
};

struct QrSolution {
  Eigen::VectorXd coef;
  double objective = 0.0;
  std::size_t n_zero_residuals = 0;
  bool rank_ok = false;
  // Rows interpolated by the returned vertex (indices into the full problem).
  std::vector<Eigen::Index> basis;
  int pivots = 0;
};

/// Exact minimiser of sum over active rows of rho_tau(response - design * coef).
///
/// The solver walks the vertices of the piecewise-linear objective: each
/// vertex interpolates d active rows, every edge leaving it frees one of
/// them, and the step along the steepest descending edge is an exact
/// weighted-median line search over the residual breakpoints. Degenerate
/// vertices (extra zero residuals) are resolved by trying the other bases
/// through the same point before optimality is declared. Among optimal
/// vertices the lexicographically smallest coefficient vector reachable
/// along flat edges is returned.
///
/// Returns rank_ok = false (and no coefficients) when the active design is
/// not of full column rank. `warm_basis` may name d active rows to start from.
QrSolution try_solve_convex_qr(const Eigen::Ref<const Eigen::MatrixXd>& design,
                               const Eigen::Ref<const Eigen::VectorXd>& response,
                               std::span<const unsigned char> active, QuantileLevel tau,
                               std::span<const Eigen::Index> warm_basis = {});

/// Throws Error(RankDeficient) instead of returning rank_ok = false.
QrSolution solve_convex_qr(const ConvexQrProblem& problem);

/// sum over active rows of rho_tau(response - design * coef).
double convex_qr_objective(const Eigen::Ref<const Eigen::MatrixXd>& design,
                           const Eigen::Ref<const Eigen::VectorXd>& response,
                           std::span<const unsigned char> active, QuantileLevel tau,
                           const Eigen::VectorXd& coef);

}  // namespace cqr
