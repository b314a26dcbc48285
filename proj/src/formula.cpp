#include "cqr/data_model.hpp"

#include "cqr/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace cqr {

Term Term::intercept() { return Term{}; }

Term Term::column(std::string name) {
  Term t;
  t.kind = Kind::Column;
  t.variable = std::move(name);
  return t;
}

Term Term::pw_lo(std::string variable, double knot) {
  Term t;
  t.kind = Kind::PiecewiseLow;
  t.variable = std::move(variable);
  t.knot = knot;
  return t;
}

Term Term::pw_hi(std::string variable, double knot) {
  Term t = pw_lo(std::move(variable), knot);
  t.kind = Kind::PiecewiseHigh;
  return t;
}

Term Term::product(Term a, Term b) {
  Term t;
  t.kind = Kind::Product;
  // Flatten nested products so a*b*c is a single three-factor term.
  for (Term* f : {&a, &b}) {
    if (f->kind == Kind::Product)
      for (auto& g : f->factors) t.factors.push_back(std::move(g));
    else
      t.factors.push_back(std::move(*f));
  }
  return t;
}

namespace {

std::string format_knot(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", k);
  return buf;
}

class TermParser {
 public:
  explicit TermParser(std::string_view text) : s_(text) {}

  std::vector<Term> parse_list() {
    std::vector<Term> terms;
    skip_ws();
    if (pos_ == s_.size()) return terms;
    terms.push_back(parse_term());
    while (consume(',')) terms.push_back(parse_term());
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return terms;
  }

 private:
  Term parse_term() {
    Term t = parse_factor();
    while (consume('*')) t = Term::product(std::move(t), parse_factor());
    return t;
  }

  Term parse_factor() {
    skip_ws();
    if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      const double v = parse_number();
      if (v != 1.0) fail("only the constant 1 (intercept) is allowed");
      return Term::intercept();
    }
    std::string name = parse_ident();
    if (!consume('(')) return Term::column(std::move(name));
    if (name != "pw_lo" && name != "pw_hi") fail("unknown function '" + name + "'");
    std::string var = parse_ident();
    if (!consume(',')) fail("expected ',' in " + name + "(...)");
    skip_ws();
    const double knot = parse_number();
    if (!std::isfinite(knot)) fail("knot must be finite");
    if (!consume(')')) fail("expected ')' after knot");
    return name == "pw_lo" ? Term::pw_lo(std::move(var), knot) : Term::pw_hi(std::move(var), knot);
  }

  std::string parse_ident() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '.'))
      ++pos_;
    if (start == pos_) fail("expected a variable name");
    return std::string(s_.substr(start, pos_ - start));
  }

  double parse_number() {
    const char* begin = s_.data() + pos_;
    const char* end = s_.data() + s_.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc()) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return v;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::FormulaError,
                what + " at position " + std::to_string(pos_ + 1) + " in '" + std::string(s_) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

// Resolved reference to a row value: the time field or a covariate column.
struct VariableRef {
  bool is_time = false;
  std::size_t column = 0;
};

VariableRef resolve(const std::string& name, const std::vector<std::string>& names) {
  if (name == "time") return {true, 0};
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::UnknownCovariate, "no column named '" + name + "'");
  return {false, static_cast<std::size_t>(it - names.begin())};
}

double lookup(const VariableRef& ref, const Row& row, const std::string& subject) {
  if (!ref.is_time) return row.covariates[ref.column];
  if (!row.time) throw Error(ErrorCode::MissingTime, "subject '" + subject + "' has a row without time");
  return *row.time;
}

double evaluate(const Term& t, const Row& row, const std::vector<std::string>& names,
                const std::string& subject) {
  switch (t.kind) {
    case Term::Kind::Intercept:
      return 1.0;
    case Term::Kind::Column:
      return lookup(resolve(t.variable, names), row, subject);
    case Term::Kind::PiecewiseLow:
      return std::min(lookup(resolve(t.variable, names), row, subject), t.knot);
    case Term::Kind::PiecewiseHigh: {
      const double v = lookup(resolve(t.variable, names), row, subject);
      return v > t.knot ? v - t.knot : 0.0;
    }
    case Term::Kind::Product: {
      double v = 1.0;
      for (const auto& f : t.factors) v *= evaluate(f, row, names, subject);
      return v;
    }
  }
  return 0.0;
}

}  // namespace

std::string Term::to_string() const {
  switch (kind) {
    case Kind::Intercept: return "1";
    case Kind::Column: return variable;
    case Kind::PiecewiseLow: return "pw_lo(" + variable + "," + format_knot(knot) + ")";
    case Kind::PiecewiseHigh: return "pw_hi(" + variable + "," + format_knot(knot) + ")";
    case Kind::Product: {
      std::string s;
      for (std::size_t i = 0; i < factors.size(); ++i) s += (i ? "*" : "") + factors[i].to_string();
      return s;
    }
  }
  return {};
}

std::vector<Term> parse_terms(std::string_view text) { return TermParser(text).parse_list(); }

ModelFormula parse_formula(std::string_view x_spec, std::string_view z_spec) {
  return ModelFormula{parse_terms(x_spec), parse_terms(z_spec)};
}

LongitudinalDataset build_design(const ModelFormula& formula, LongitudinalDataset data) {
  // Resolve every name once so unknown columns fail before any row is touched.
  auto check = [&](const Term& t, auto&& self) -> void {
    if (t.kind == Term::Kind::Product) {
      for (const auto& f : t.factors) self(f, self);
    } else if (t.kind != Term::Kind::Intercept) {
      resolve(t.variable, data.covariate_names);
    }
  };
  for (const auto& t : formula.x_terms) check(t, check);
  for (const auto& t : formula.z_terms) check(t, check);

  for (auto& block : data.subjects) {
    for (auto& row : block.rows) {
      row.x.resize(formula.x_terms.size());
      row.z.resize(formula.z_terms.size());
      for (std::size_t k = 0; k < formula.x_terms.size(); ++k)
        row.x[k] = evaluate(formula.x_terms[k], row, data.covariate_names, block.subject_id);
      for (std::size_t k = 0; k < formula.z_terms.size(); ++k)
        row.z[k] = evaluate(formula.z_terms[k], row, data.covariate_names, block.subject_id);
    }
  }
  data.p = formula.x_terms.size();
  data.q = formula.z_terms.size();
  return data;
}

}  // namespace cqr
