#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

/// One observation y_ij with its fixed left-censoring limit c_ij.
struct Row {
  double y = 0.0;
  double censor_limit = 0.0;
  // Absent means "infer from y and censor_limit" during validation.
  std::optional<bool> is_censored;
  std::vector<double> x;
  std::vector<double> z;
  std::optional<double> time;
  // Raw named columns, parallel to LongitudinalDataset::covariate_names.
  std::vector<double> covariates;

  bool censored() const { return is_censored.value_or(false); }
};

struct SubjectBlock {
  std::string subject_id;
  std::vector<Row> rows;
};

struct LongitudinalDataset {
  std::vector<SubjectBlock> subjects;
  std::vector<std::string> covariate_names;
  std::size_t p = 0;
  std::size_t q = 0;
  std::size_t n = 0;

  std::size_t n_subjects() const { return subjects.size(); }
};

enum class DesignSelector { XOnly, JointXZ };

/// Numeric tolerance used to decide whether y sits on its censoring limit.
double censor_tolerance(double limit);

/// Reconciles censoring flags, checks shapes and finiteness, fills n/p/q.
LongitudinalDataset validate_dataset(LongitudinalDataset raw);

/// Contiguous column-major copies of the dataset, in subject-then-row order.
struct FlatData {
  Eigen::VectorXd y;
  Eigen::VectorXd c;
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;
  std::vector<unsigned char> censored;
  // Row offsets of each subject block; size N + 1.
  std::vector<std::size_t> block_start;

  Eigen::Index rows() const { return y.size(); }
  Eigen::MatrixXd design(DesignSelector selector) const;
};

FlatData flatten(const LongitudinalDataset& data);

std::size_t design_width(const LongitudinalDataset& data, DesignSelector selector);

/// Keeps the rows for which `keep(row)` is true; subjects left empty are dropped.
template <class Pred>
LongitudinalDataset filter_rows(const LongitudinalDataset& data, Pred keep) {
  LongitudinalDataset out;
  out.covariate_names = data.covariate_names;
  out.p = data.p;
  out.q = data.q;
  for (const auto& block : data.subjects) {
    SubjectBlock kept{block.subject_id, {}};
    for (const auto& row : block.rows)
      if (keep(row)) kept.rows.push_back(row);
    if (!kept.rows.empty()) {
      out.n += kept.rows.size();
      out.subjects.push_back(std::move(kept));
    }
  }
  return out;
}

/// Response and limit shifted by -z'beta0 on every row (censored rows stay on
/// their shifted limit).
LongitudinalDataset shift_by_z(const LongitudinalDataset& data, const Eigen::VectorXd& beta0);

/// Makes z column `index` the only z column and appends the remaining z
/// columns to x.
LongitudinalDataset isolate_z_column(const LongitudinalDataset& data, std::size_t index);

// ---------------------------------------------------------------------------
// Model formulas

struct Term {
  enum class Kind { Intercept, Column, PiecewiseLow, PiecewiseHigh, Product };

  Kind kind = Kind::Intercept;
  std::string variable;
  double knot = 0.0;
  std::vector<Term> factors;

  static Term intercept();
  static Term column(std::string name);
  // min(t, k)
  static Term pw_lo(std::string variable, double knot);
  // (t - k) * I(t > k)
  static Term pw_hi(std::string variable, double knot);
  static Term product(Term a, Term b);

  std::string to_string() const;
};

struct ModelFormula {
  std::vector<Term> x_terms;
  std::vector<Term> z_terms;
};

/// Parses a comma-separated term list such as "1, pw_lo(time,2), pw_hi(time,2)*trt".
std::vector<Term> parse_terms(std::string_view text);
ModelFormula parse_formula(std::string_view x_spec, std::string_view z_spec);

/// Rebuilds x and z of every row from the formula; column order follows term order.
LongitudinalDataset build_design(const ModelFormula& formula, LongitudinalDataset data);

// ---------------------------------------------------------------------------
// CSV interchange

LongitudinalDataset parse_csv(std::istream& in);
LongitudinalDataset parse_csv_file(const std::string& path);
void write_csv(std::ostream& out, const LongitudinalDataset& data);

}  // namespace cqr
