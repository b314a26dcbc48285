#include "cqr/data_model.hpp"

#include "cqr/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace cqr {
namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what);
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += ch;
    }
  }
  if (quoted) parse_fail(line_no, "unterminated quoted field");
  fields.push_back(was_quoted ? cur : trim(cur));
  return fields;
}

double parse_real(const std::string& field, std::size_t line_no, const std::string& column) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  if (!field.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (field.empty() || ec != std::errc() || ptr != e)
    parse_fail(line_no, "column '" + column + "': cannot parse '" + field + "' as a number");
  return v;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos && trim(s) == s) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

LongitudinalDataset parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    header = split_fields(line, line_no);
    break;
  }
  if (header.empty()) throw Error(ErrorCode::ParseError, "line 1: missing header");

  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t col_subject = npos, col_y = npos, col_limit = npos, col_flag = npos, col_time = npos;
  std::vector<std::size_t> cov_cols;
  LongitudinalDataset data;
  std::unordered_map<std::string, std::size_t> header_seen;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const std::string& h = header[k];
    if (h.empty()) parse_fail(line_no, "empty column name");
    if (!header_seen.emplace(h, k).second) parse_fail(line_no, "duplicate column '" + h + "'");
    if (h == "subject_id") col_subject = k;
    else if (h == "y") col_y = k;
    else if (h == "censor_limit") col_limit = k;
    else if (h == "censored") col_flag = k;
    else if (h == "time") col_time = k;
    else {
      cov_cols.push_back(k);
      data.covariate_names.push_back(h);
    }
  }
  if (col_subject == npos) parse_fail(line_no, "missing required column 'subject_id'");
  if (col_y == npos) parse_fail(line_no, "missing required column 'y'");

  std::unordered_map<std::string, std::size_t> subject_index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, line_no);
    if (fields.size() != header.size())
      parse_fail(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(fields.size()));
    Row row;
    row.y = parse_real(fields[col_y], line_no, "y");
    if (col_limit != npos && !fields[col_limit].empty())
      row.censor_limit = parse_real(fields[col_limit], line_no, "censor_limit");
    if (col_flag != npos && !fields[col_flag].empty()) {
      const std::string& f = fields[col_flag];
      if (f == "1" || f == "true" || f == "TRUE") row.is_censored = true;
      else if (f == "0" || f == "false" || f == "FALSE") row.is_censored = false;
      else parse_fail(line_no, "column 'censored' must be 0 or 1, found '" + f + "'");
    }
    if (col_time != npos && !fields[col_time].empty())
      row.time = parse_real(fields[col_time], line_no, "time");
    row.covariates.reserve(cov_cols.size());
    for (std::size_t k = 0; k < cov_cols.size(); ++k)
      row.covariates.push_back(parse_real(fields[cov_cols[k]], line_no, data.covariate_names[k]));

    const std::string& id = fields[col_subject];
    if (id.empty()) parse_fail(line_no, "empty subject_id");
    auto [it, inserted] = subject_index.emplace(id, data.subjects.size());
    if (inserted) data.subjects.push_back(SubjectBlock{id, {}});
    data.subjects[it->second].rows.push_back(std::move(row));
  }
  return validate_dataset(std::move(data));
}

LongitudinalDataset parse_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  return parse_csv(in);
}

void write_csv(std::ostream& out, const LongitudinalDataset& data) {
  bool any_time = false;
  for (const auto& b : data.subjects)
    for (const auto& r : b.rows) any_time = any_time || r.time.has_value();

  out << "subject_id,y,censor_limit,censored";
  if (any_time) out << ",time";
  for (const auto& name : data.covariate_names) out << ',' << quote_if_needed(name);
  out << '\n';
  for (const auto& b : data.subjects) {
    const std::string id = quote_if_needed(b.subject_id);
    for (const auto& r : b.rows) {
      out << id << ',' << fmt17(r.y) << ',' << fmt17(r.censor_limit) << ',';
      if (r.is_censored) out << (*r.is_censored ? '1' : '0');
      if (any_time) {
        out << ',';
        if (r.time) out << fmt17(*r.time);
      }
      for (double v : r.covariates) out << ',' << fmt17(v);
      out << '\n';
    }
  }
}

}  // namespace cqr
