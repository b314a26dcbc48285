#include "cqr/intervals.hpp"

#include "cqr/distributions.hpp"
#include "cqr/error.hpp"
#include "cqr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cqr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(IntervalMethod method) noexcept {
  return method == IntervalMethod::Inversion ? "inversion" : "bootstrap";
}

RankScoreResult test_at_beta0(const LongitudinalDataset& data, QuantileLevel tau, const VectorXd& beta0,
                              const FitConfig& config, TestOptions options) {
  const LongitudinalDataset shifted = shift_by_z(data, beta0);
  const PowellFit fit = options.null_fit == NullFit::Censored
                            ? fit_powell(shifted, tau, config, DesignSelector::XOnly)
                            : fit_uncensored(shifted, tau, DesignSelector::XOnly);
  return qrs_test(shifted, fit, tau, options.delta_mode);
}

namespace {

constexpr int kMaxDoublings = 20;
constexpr int kMaxRescans = 3;

class InversionSearch {
 public:
  InversionSearch(const LongitudinalDataset& reduced, QuantileLevel tau, double level, const FitConfig& config,
                  TestOptions options)
      : data_(reduced), tau_(tau), config_(config), options_(options),
        critical_(chi2_critical(1.0 - level, 1)) {}

  bool accepted(double beta0) {
    ++evaluations_;
    VectorXd b(1);
    b[0] = beta0;
    return test_at_beta0(data_, tau_, b, config_, options_).t_n <= critical_;
  }

  // Returns the outermost accepted point on one side of `center`.
  double bound(double center, double direction, ConfidenceInterval& ci) {
    const double step = 0.5 * std::max(1.0, std::abs(center));
    double inner = center;
    double outer = std::numeric_limits<double>::quiet_NaN();
    double offset = step;
    for (int rescan = 0;; ++rescan) {
      for (int k = 0; k <= kMaxDoublings; ++k, offset *= 2.0) {
        const double probe = center + direction * offset;
        if (accepted(probe)) {
          inner = probe;
        } else {
          outer = probe;
          break;
        }
      }
      if (std::isnan(outer)) {
        ci.warnings.push_back("no rejection found; interval unbounded on one side");
        ++ci.boundary_warnings;
        return direction * std::numeric_limits<double>::infinity();
      }
      // One probe past the bracket: acceptance there means T_n is not
      // quasi-convex along the path, so keep scanning outward.
      const double beyond = outer + (outer - inner);
      if (rescan < kMaxRescans && accepted(beyond)) {
        ci.warnings.push_back("test accepted again beyond a rejection at " + std::to_string(outer));
        ++ci.boundary_warnings;
        inner = beyond;
        offset = std::abs(beyond - center) * 2.0;
        outer = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      break;
    }
    const double tol = 1e-4 * (1.0 + std::abs(center));
    while (std::abs(outer - inner) > tol) {
      const double mid = 0.5 * (inner + outer);
      (accepted(mid) ? inner : outer) = mid;
    }
    return inner;
  }

  int evaluations() const { return evaluations_; }

 private:
  const LongitudinalDataset& data_;
  QuantileLevel tau_;
  const FitConfig& config_;
  TestOptions options_;
  double critical_;
  int evaluations_ = 0;
};

}  // namespace

ConfidenceInterval invert_ci(const LongitudinalDataset& data, QuantileLevel tau, std::size_t coefficient_index,
                             double level, const FitConfig& config, TestOptions options) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  const LongitudinalDataset reduced = isolate_z_column(data, coefficient_index);

  const PowellFit joint = options.null_fit == NullFit::Censored
                              ? fit_powell(reduced, tau, config, DesignSelector::JointXZ)
                              : fit_uncensored(reduced, tau, DesignSelector::JointXZ);
  const double estimate = joint.coef[joint.coef.size() - 1];

  ConfidenceInterval ci;
  ci.level = level;
  ci.method = IntervalMethod::Inversion;
  ci.target = coefficient_index;
  ci.estimate = estimate;

  InversionSearch search(reduced, tau, level, config, options);
  if (!search.accepted(estimate)) {
    ci.warnings.push_back("point estimate is rejected by the test");
    ++ci.boundary_warnings;
  }
  ci.upper = search.bound(estimate, +1.0, ci);
  ci.lower = search.bound(estimate, -1.0, ci);
  ci.n_evaluations = search.evaluations();
  return ci;
}

namespace {

// One bootstrap replicate: resample N subject blocks with replacement and
// solve the convex problem on the rows predicted uncensored by gamma-hat.
// Rank-deficient resamples are redrawn from the same stream.
struct ReplicateKernel {
  const CensoredProblem& problem;
  const std::vector<std::size_t>& block_start;
  const std::vector<unsigned char>& keep;  // design_i' gamma_hat > c_i
  QuantileLevel tau;
  std::uint64_t seed;
  long max_attempts;

  long operator()(std::size_t b, Eigen::Ref<VectorXd> out) const {
    const std::size_t n_blocks = block_start.size() - 1;
    const Index d = problem.design.cols();
    std::mt19937_64 rng(stream_seed(seed, b));
    std::uniform_int_distribution<std::size_t> pick(0, n_blocks - 1);
    std::vector<std::size_t> rows;
    for (long attempt = 1; attempt <= max_attempts; ++attempt) {
      rows.clear();
      for (std::size_t k = 0; k < n_blocks; ++k) {
        const std::size_t s = pick(rng);
        for (std::size_t i = block_start[s]; i < block_start[s + 1]; ++i)
          if (keep[i]) rows.push_back(i);
      }
      MatrixXd x(static_cast<Index>(rows.size()), d);
      VectorXd y(static_cast<Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Index>(r)) = problem.design.row(static_cast<Index>(rows[r]));
        y[static_cast<Index>(r)] = problem.y[static_cast<Index>(rows[r])];
      }
      const QrSolution sol = try_solve_convex_qr(x, y, {}, tau);
      if (sol.rank_ok) {
        out = sol.coef;
        return attempt;
      }
    }
    throw Error(ErrorCode::DegenerateResample, "bootstrap replicate " + std::to_string(b) +
                                                   " kept drawing rank-deficient resamples");
  }
};

std::vector<unsigned char> predicted_active(const CensoredProblem& problem, const VectorXd& gamma_hat) {
  if (gamma_hat.size() != problem.design.cols())
    throw Error(ErrorCode::DimensionMismatch, "gamma_hat length does not match the design");
  const VectorXd fitted = problem.design * gamma_hat;
  std::vector<unsigned char> keep(static_cast<std::size_t>(fitted.size()));
  for (Index i = 0; i < fitted.size(); ++i) keep[static_cast<std::size_t>(i)] = fitted[i] > problem.c[i] ? 1 : 0;
  return keep;
}

void check_bootstrap_args(const std::vector<std::size_t>& block_start, int B) {
  if (B < 1) throw Error(ErrorCode::InvalidArgument, "B must be at least 1");
  if (block_start.size() < 2) throw Error(ErrorCode::EmptyDataset, "no subjects to resample");
}

long total_attempts(const std::vector<long>& attempts, int B) {
  long total = 0;
  for (long a : attempts) total += a;
  if (total > 10L * B)
    throw Error(ErrorCode::DegenerateResample, "more than 10B resamples were needed");
  return total;
}

}  // namespace

BootstrapDraws bootstrap_draws(const CensoredProblem& problem, const std::vector<std::size_t>& block_start,
                               const VectorXd& gamma_hat, QuantileLevel tau, int B, std::uint64_t seed,
                               int workers) {
  check_bootstrap_args(block_start, B);
  const auto keep = predicted_active(problem, gamma_hat);
  const ReplicateKernel kernel{problem, block_start, keep, tau, seed, 10L * B};
  BootstrapDraws draws;
  draws.coef.resize(B, problem.design.cols());
  MatrixXd& coef = draws.coef;
  std::vector<long> attempts(static_cast<std::size_t>(B), 0);
  // Rows of a column-major matrix are strided; write through a temporary.
  parallel_for(static_cast<std::size_t>(B), workers, [&](std::size_t b) {
    VectorXd row(problem.design.cols());
    attempts[b] = kernel(b, row);
    coef.row(static_cast<Index>(b)) = row.transpose();
  });
  draws.attempts = total_attempts(attempts, B);
  return draws;
}

BootstrapDraws bootstrap_draws_serial(const CensoredProblem& problem, const std::vector<std::size_t>& block_start,
                                      const VectorXd& gamma_hat, QuantileLevel tau, int B, std::uint64_t seed) {
  check_bootstrap_args(block_start, B);
  const auto keep = predicted_active(problem, gamma_hat);
  const ReplicateKernel kernel{problem, block_start, keep, tau, seed, 10L * B};
  BootstrapDraws draws;
  draws.coef.resize(B, problem.design.cols());
  std::vector<long> attempts(static_cast<std::size_t>(B), 0);
  serial_for(static_cast<std::size_t>(B), [&](std::size_t b) {
    VectorXd row(problem.design.cols());
    attempts[b] = kernel(b, row);
    draws.coef.row(static_cast<Index>(b)) = row.transpose();
  });
  draws.attempts = total_attempts(attempts, B);
  return draws;
}

ConfidenceInterval percentile_interval(std::vector<double> values, double level) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "no bootstrap values");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  std::sort(values.begin(), values.end());
  const double B = static_cast<double>(values.size());
  const double half_theta = 0.5 * (1.0 - level);
  auto order_stat = [&](double prob) {
    auto idx = static_cast<long>(std::ceil(B * prob - 1e-9));
    idx = std::clamp(idx, 1L, static_cast<long>(values.size()));
    return values[static_cast<std::size_t>(idx - 1)];
  };
  ConfidenceInterval ci;
  ci.level = level;
  ci.method = IntervalMethod::Bootstrap;
  ci.lower = order_stat(half_theta);
  ci.upper = order_stat(1.0 - half_theta);
  ci.n_evaluations = static_cast<int>(values.size());
  return ci;
}

BootstrapResult block_bootstrap_ci(const LongitudinalDataset& data, QuantileLevel tau, const BootstrapConfig& boot,
                                   const VectorXd& gamma_hat, int workers) {
  const FlatData flat = flatten(data);
  const CensoredProblem problem{flat.design(DesignSelector::JointXZ), flat.y, flat.c};
  BootstrapDraws draws = bootstrap_draws(problem, flat.block_start, gamma_hat, tau, boot.B, boot.seed, workers);

  BootstrapResult result;
  result.estimate = gamma_hat;
  result.attempts = draws.attempts;
  for (Index j = 0; j < draws.coef.cols(); ++j) {
    const VectorXd col = draws.coef.col(j);
    ConfidenceInterval ci = percentile_interval(std::vector<double>(col.data(), col.data() + col.size()), boot.level);
    ci.target = static_cast<std::size_t>(j);
    ci.estimate = gamma_hat[j];
    result.intervals.push_back(std::move(ci));
  }
  result.replicates = std::move(draws.coef);
  return result;
}

BootstrapResult block_bootstrap_ci(const LongitudinalDataset& data, QuantileLevel tau, const BootstrapConfig& boot,
                                   const FitConfig& config, int workers) {
  const PowellFit joint = fit_powell(data, tau, config, DesignSelector::JointXZ);
  return block_bootstrap_ci(data, tau, boot, joint.coef, workers);
}

}  // namespace cqr
