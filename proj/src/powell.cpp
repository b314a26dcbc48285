#include "cqr/powell.hpp"

#include "cqr/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_set>

namespace cqr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t PowellFit::n_active() const {
  return static_cast<std::size_t>(std::count(uncensored_pred_mask.begin(), uncensored_pred_mask.end(), 1));
}

CensoredProblem CensoredProblem::from(const LongitudinalDataset& data, DesignSelector selector) {
  FlatData flat = flatten(data);
  return CensoredProblem{flat.design(selector), std::move(flat.y), std::move(flat.c)};
}

double objective_q(const VectorXd& coef, const CensoredProblem& problem, QuantileLevel tau) {
  if (coef.size() != problem.design.cols())
    throw Error(ErrorCode::DimensionMismatch, "coefficient length " + std::to_string(coef.size()) +
                                                  " does not match design width " +
                                                  std::to_string(problem.design.cols()));
  const VectorXd fitted = problem.design * coef;
  double s = 0.0;
  for (Index i = 0; i < fitted.size(); ++i) s += rho(tau, problem.y[i] - std::max(problem.c[i], fitted[i]));
  return s;
}

double objective_q(const VectorXd& coef, const LongitudinalDataset& data, QuantileLevel tau,
                   DesignSelector selector) {
  return objective_q(coef, CensoredProblem::from(data, selector), tau);
}

PowellFit describe_fit(const CensoredProblem& problem, QuantileLevel tau, VectorXd coef) {
  PowellFit fit;
  const VectorXd fitted = problem.design * coef;
  const Index n = fitted.size();
  fit.uncensored_pred_mask.resize(static_cast<std::size_t>(n));
  fit.residuals.resize(n);
  double s = 0.0;
  for (Index i = 0; i < n; ++i) {
    fit.uncensored_pred_mask[static_cast<std::size_t>(i)] = fitted[i] > problem.c[i] ? 1 : 0;
    fit.residuals[i] = problem.y[i] - std::max(problem.c[i], fitted[i]);
    s += rho(tau, fit.residuals[i]);
  }
  fit.objective = s;
  fit.coef = std::move(coef);
  fit.boundary_flag = fit.n_active() <= static_cast<std::size_t>(problem.design.cols());
  return fit;
}

namespace {

std::vector<unsigned char> predicted_uncensored(const CensoredProblem& problem, const VectorXd& coef) {
  const VectorXd fitted = problem.design * coef;
  // A censored row in the basis is interpolated at its limit; rounding must
  // not decide which side of the boundary it lands on.
  const double band = 1e-11 * problem.y.cwiseAbs().maxCoeff();
  std::vector<unsigned char> mask(static_cast<std::size_t>(fitted.size()));
  for (Index i = 0; i < fitted.size(); ++i)
    mask[static_cast<std::size_t>(i)] = fitted[i] > problem.c[i] + band ? 1 : 0;
  return mask;
}

std::uint64_t hash_mask(const std::vector<unsigned char>& mask) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : mask) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

bool lex_less(const VectorXd& a, const VectorXd& b) {
  for (Index j = 0; j < a.size(); ++j) {
    if (a[j] < b[j]) return true;
    if (a[j] > b[j]) return false;
  }
  return false;
}

double improvement_tol(double q) { return 1e-12 * std::abs(q); }

double median_of(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

// Scale of each coordinate used for start perturbations: a robust spread of
// y divided by the spread of the design column. Equivariant in y.
VectorXd coordinate_spread(const CensoredProblem& problem) {
  const Index n = problem.y.size();
  std::vector<double> y(problem.y.data(), problem.y.data() + n);
  const double med = median_of(y);
  for (double& v : y) v = std::abs(v - med);
  double sy = 1.4826 * median_of(y);
  if (!(sy > 0.0)) {
    const double mean = problem.y.mean();
    sy = std::sqrt((problem.y.array() - mean).square().sum() / static_cast<double>(std::max<Index>(1, n - 1)));
  }
  if (!(sy > 0.0)) sy = 1.0;

  VectorXd spread(problem.design.cols());
  for (Index j = 0; j < problem.design.cols(); ++j) {
    const auto col = problem.design.col(j).array();
    const double rms = std::sqrt(col.square().mean());
    const double sd = std::sqrt((col - col.mean()).square().mean());
    double scale = sd > 1e-12 * rms ? sd : rms;
    if (!(scale > 0.0)) scale = 1.0;
    spread[j] = sy / scale;
  }
  return spread;
}

struct StartOutcome {
  bool empty = false;
  VectorXd coef;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

StartOutcome descend(const CensoredProblem& problem, QuantileLevel tau, VectorXd coef, int max_iterations,
                     std::vector<Index> warm) {
  StartOutcome out;
  auto mask = predicted_uncensored(problem, coef);
  if (std::none_of(mask.begin(), mask.end(), [](unsigned char b) { return b != 0; })) {
    out.empty = true;
    return out;
  }
  double q = objective_q(coef, problem, tau);
  std::unordered_set<std::uint64_t> seen{hash_mask(mask)};

  for (int it = 0; it < max_iterations; ++it) {
    ++out.iterations;
    QrSolution sol = try_solve_convex_qr(problem.design, problem.y, mask, tau, warm);
    if (!sol.rank_ok) break;
    warm = sol.basis;

    const double q_full = objective_q(sol.coef, problem, tau);
    bool full_step = false;
    bool accepted = false;
    if (q_full < q - improvement_tol(q)) {
      coef = sol.coef;
      q = q_full;
      full_step = accepted = true;
    } else {
      // The convexified step overshot; backtrack toward the current point.
      const VectorXd dir = sol.coef - coef;
      double t = 0.5;
      for (int h = 0; h < 8 && !accepted; ++h, t *= 0.5) {
        VectorXd cand = coef + t * dir;
        const double qc = objective_q(cand, problem, tau);
        if (qc < q - improvement_tol(q)) {
          coef = std::move(cand);
          q = qc;
          accepted = true;
        }
      }
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    auto next = predicted_uncensored(problem, coef);
    if (full_step && next == mask) {
      out.converged = true;
      break;
    }
    if (full_step && !seen.insert(hash_mask(next)).second) break;  // active sets cycle
    mask = std::move(next);
  }
  const auto final_mask = predicted_uncensored(problem, coef);
  out.empty = std::none_of(final_mask.begin(), final_mask.end(), [](unsigned char b) { return b != 0; });
  out.coef = std::move(coef);
  out.objective = q;
  return out;
}

}  // namespace

PowellFit fit_powell(const CensoredProblem& problem, QuantileLevel tau, const FitConfig& config) {
  if (config.max_iterations < 1 || config.n_starts < 1)
    throw Error(ErrorCode::InvalidArgument, "max_iterations and n_starts must be at least 1");
  const Index d = problem.design.cols();
  if (d == 0) throw Error(ErrorCode::InvalidArgument, "design has no columns");

  const QrSolution naive = try_solve_convex_qr(problem.design, problem.y, {}, tau);
  if (!naive.rank_ok) throw Error(ErrorCode::RankDeficient, "design is not of full column rank");

  const VectorXd spread = coordinate_spread(problem);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  StartOutcome best;
  bool have_best = false;
  int iterations = 0;
  for (int s = 0; s < config.n_starts; ++s) {
    // Later starts hop around the best local minimum found so far.
    VectorXd start = have_best ? best.coef : naive.coef;
    if (s > 0)
      for (Index j = 0; j < d; ++j) start[j] += config.start_perturbation_scale * spread[j] * normal(rng);
    StartOutcome r = descend(problem, tau, std::move(start), config.max_iterations, naive.basis);
    iterations += r.iterations;
    if (r.empty) continue;
    const bool better =
        !have_best || r.objective < best.objective - improvement_tol(best.objective) ||
        (r.objective <= best.objective + improvement_tol(best.objective) && lex_less(r.coef, best.coef));
    if (better) {
      best = std::move(r);
      have_best = true;
    }
  }
  if (!have_best)
    throw Error(ErrorCode::EmptyActiveSet, "every start predicts all observations censored");

  PowellFit fit = describe_fit(problem, tau, std::move(best.coef));
  fit.n_iterations = iterations;
  fit.n_starts = config.n_starts;
  fit.converged = best.converged;
  return fit;
}

PowellFit fit_powell(const LongitudinalDataset& data, QuantileLevel tau, const FitConfig& config,
                     DesignSelector selector) {
  return fit_powell(CensoredProblem::from(data, selector), tau, config);
}

PowellFit fit_uncensored(const LongitudinalDataset& data, QuantileLevel tau, DesignSelector selector) {
  const FlatData flat = flatten(data);
  const MatrixXd design = flat.design(selector);
  QrSolution sol = try_solve_convex_qr(design, flat.y, {}, tau);
  if (!sol.rank_ok) throw Error(ErrorCode::RankDeficient, "design is not of full column rank");
  PowellFit fit;
  fit.residuals = flat.y - design * sol.coef;
  fit.uncensored_pred_mask.assign(static_cast<std::size_t>(flat.rows()), 1);
  fit.objective = sol.objective;
  fit.coef = std::move(sol.coef);
  fit.n_iterations = sol.pivots;
  fit.n_starts = 1;
  fit.converged = true;
  return fit;
}

PowellFit fit_grid_oracle(const LongitudinalDataset& data, QuantileLevel tau, std::span<const Interval> bounds,
                          double step, DesignSelector selector) {
  const CensoredProblem problem = CensoredProblem::from(data, selector);
  const Index d = problem.design.cols();
  if (d < 1 || d > 2) throw Error(ErrorCode::DimensionTooLarge, "grid oracle supports 1 or 2 coefficients");
  if (static_cast<Index>(bounds.size()) != d)
    throw Error(ErrorCode::DimensionMismatch, "one interval per coefficient is required");
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "grid step must be positive");
  for (const auto& b : bounds)
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.hi < b.lo)
      throw Error(ErrorCode::InvalidArgument, "grid bounds must be finite with lo <= hi");

  auto count = [&](const Interval& b) { return static_cast<long>(std::floor((b.hi - b.lo) / step + 1e-9)) + 1; };
  const long n0 = count(bounds[0]);
  const long n1 = d == 2 ? count(bounds[1]) : 1;

  const Index n = problem.y.size();
  const auto x0 = problem.design.col(0);
  VectorXd best(d);
  double best_q = std::numeric_limits<double>::infinity();
  for (long i = 0; i < n0; ++i) {
    const double a = bounds[0].lo + static_cast<double>(i) * step;
    for (long j = 0; j < n1; ++j) {
      const double b = d == 2 ? bounds[1].lo + static_cast<double>(j) * step : 0.0;
      double q = 0.0;
      for (Index r = 0; r < n; ++r) {
        const double fitted = x0[r] * a + (d == 2 ? problem.design(r, 1) * b : 0.0);
        q += rho(tau, problem.y[r] - std::max(problem.c[r], fitted));
      }
      if (q < best_q) {
        best_q = q;
        best[0] = a;
        if (d == 2) best[1] = b;
      }
    }
  }
  PowellFit fit = describe_fit(problem, tau, best);
  fit.n_iterations = static_cast<int>(std::min<long>(n0 * n1, std::numeric_limits<int>::max()));
  fit.n_starts = 0;
  fit.converged = true;
  return fit;
}

}  // namespace cqr
