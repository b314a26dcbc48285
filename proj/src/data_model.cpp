#include "cqr/data_model.hpp"

#include "cqr/error.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace cqr {

ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::FormulaError:
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
      return ErrorCategory::Usage;
    case ErrorCode::RankDeficient:
    case ErrorCode::EmptyActiveSet:
    case ErrorCode::NonConvergence:
    case ErrorCode::DimensionTooLarge:
    case ErrorCode::NoPairs:
    case ErrorCode::NotScalar:
    case ErrorCode::ZeroDenominator:
    case ErrorCode::UnboundedInterval:
    case ErrorCode::DegenerateResample:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::Data;
  }
}

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::AllCensored: return "AllCensored";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ResponseBelowLimit: return "ResponseBelowLimit";
    case ErrorCode::InconsistentCensorFlag: return "InconsistentCensorFlag";
    case ErrorCode::DuplicateSubject: return "DuplicateSubject";
    case ErrorCode::MissingTime: return "MissingTime";
    case ErrorCode::UnknownCovariate: return "UnknownCovariate";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::FormulaError: return "FormulaError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::EmptyActiveSet: return "EmptyActiveSet";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::UnboundedInterval: return "UnboundedInterval";
    case ErrorCode::DegenerateResample: return "DegenerateResample";
  }
  return "Unknown";
}

double censor_tolerance(double limit) { return 1e-9 * std::max(1.0, std::abs(limit)); }

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

std::string where(const SubjectBlock& block, std::size_t j) {
  return "subject '" + block.subject_id + "' row " + std::to_string(j + 1);
}

}  // namespace

LongitudinalDataset validate_dataset(LongitudinalDataset data) {
  if (data.subjects.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no subjects");

  const Row* first = nullptr;
  for (const auto& block : data.subjects) {
    if (block.rows.empty())
      throw Error(ErrorCode::EmptyDataset, "subject '" + block.subject_id + "' has no rows");
    if (!first) first = &block.rows.front();
  }
  const std::size_t p = first->x.size();
  const std::size_t q = first->z.size();
  const std::size_t n_cov = data.covariate_names.size();

  std::unordered_set<std::string> seen;
  std::size_t n = 0;
  std::size_t n_uncensored = 0;
  for (auto& block : data.subjects) {
    if (!seen.insert(block.subject_id).second)
      throw Error(ErrorCode::DuplicateSubject, "subject id '" + block.subject_id + "' repeated");
    for (std::size_t j = 0; j < block.rows.size(); ++j) {
      Row& row = block.rows[j];
      if (row.x.size() != p || row.z.size() != q)
        throw Error(ErrorCode::DimensionMismatch,
                    where(block, j) + " has design sizes (" + std::to_string(row.x.size()) + ", " +
                        std::to_string(row.z.size()) + "), expected (" + std::to_string(p) + ", " +
                        std::to_string(q) + ")");
      if (row.covariates.size() != n_cov)
        throw Error(ErrorCode::DimensionMismatch, where(block, j) + " has wrong covariate count");
      if (!std::isfinite(row.y) || !std::isfinite(row.censor_limit) || !all_finite(row.x) ||
          !all_finite(row.z) || !all_finite(row.covariates) ||
          (row.time && !std::isfinite(*row.time)))
        throw Error(ErrorCode::NonFiniteValue, where(block, j) + " contains a non-finite value");

      const double eps = censor_tolerance(row.censor_limit);
      if (row.y < row.censor_limit - eps)
        throw Error(ErrorCode::ResponseBelowLimit, where(block, j) + " has y below its censoring limit");
      const bool at_limit = row.y <= row.censor_limit + eps;
      if (!row.is_censored) {
        row.is_censored = at_limit;
      } else if (*row.is_censored && std::abs(row.y - row.censor_limit) > eps) {
        throw Error(ErrorCode::InconsistentCensorFlag,
                    where(block, j) + " is flagged censored but y differs from its limit");
      }
      if (!*row.is_censored) ++n_uncensored;
      ++n;
    }
  }
  if (n_uncensored == 0) throw Error(ErrorCode::AllCensored, "every observation is censored");

  data.p = p;
  data.q = q;
  data.n = n;
  return data;
}

Eigen::MatrixXd FlatData::design(DesignSelector selector) const {
  if (selector == DesignSelector::XOnly) return x;
  Eigen::MatrixXd d(x.rows(), x.cols() + z.cols());
  d << x, z;
  return d;
}

FlatData flatten(const LongitudinalDataset& data) {
  FlatData flat;
  const auto n = static_cast<Eigen::Index>(data.n);
  const auto p = static_cast<Eigen::Index>(data.p);
  const auto q = static_cast<Eigen::Index>(data.q);
  flat.y.resize(n);
  flat.c.resize(n);
  flat.x.resize(n, p);
  flat.z.resize(n, q);
  flat.censored.resize(data.n);
  flat.block_start.reserve(data.subjects.size() + 1);
  Eigen::Index r = 0;
  for (const auto& block : data.subjects) {
    flat.block_start.push_back(static_cast<std::size_t>(r));
    for (const auto& row : block.rows) {
      if (r >= n || static_cast<Eigen::Index>(row.x.size()) != p ||
          static_cast<Eigen::Index>(row.z.size()) != q)
        throw Error(ErrorCode::DimensionMismatch, "dataset shape does not match its n/p/q");
      flat.y[r] = row.y;
      flat.c[r] = row.censor_limit;
      for (Eigen::Index k = 0; k < p; ++k) flat.x(r, k) = row.x[k];
      for (Eigen::Index k = 0; k < q; ++k) flat.z(r, k) = row.z[k];
      flat.censored[r] = row.censored() ? 1 : 0;
      ++r;
    }
  }
  if (r != n) throw Error(ErrorCode::DimensionMismatch, "row count does not match n");
  flat.block_start.push_back(static_cast<std::size_t>(r));
  return flat;
}

std::size_t design_width(const LongitudinalDataset& data, DesignSelector selector) {
  return selector == DesignSelector::XOnly ? data.p : data.p + data.q;
}

LongitudinalDataset shift_by_z(const LongitudinalDataset& data, const Eigen::VectorXd& beta0) {
  if (static_cast<std::size_t>(beta0.size()) != data.q)
    throw Error(ErrorCode::DimensionMismatch, "beta0 length does not match q");
  LongitudinalDataset out = data;
  for (auto& block : out.subjects) {
    for (auto& row : block.rows) {
      double shift = 0.0;
      for (std::size_t k = 0; k < data.q; ++k) shift += row.z[k] * beta0[static_cast<Eigen::Index>(k)];
      row.y -= shift;
      row.censor_limit -= shift;
      // A censored row sits exactly on its limit; keep it there after rounding.
      if (row.censored()) row.y = row.censor_limit;
    }
  }
  return out;
}

LongitudinalDataset isolate_z_column(const LongitudinalDataset& data, std::size_t index) {
  if (index >= data.q)
    throw Error(ErrorCode::InvalidArgument,
                "z column " + std::to_string(index) + " out of range (q = " + std::to_string(data.q) + ")");
  LongitudinalDataset out = data;
  for (auto& block : out.subjects) {
    for (auto& row : block.rows) {
      std::vector<double> z{row.z[index]};
      for (std::size_t k = 0; k < row.z.size(); ++k)
        if (k != index) row.x.push_back(row.z[k]);
      row.z = std::move(z);
    }
  }
  out.p = data.p + data.q - 1;
  out.q = 1;
  return out;
}

}  // namespace cqr
