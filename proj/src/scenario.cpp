#include "cqr/error.hpp"
#include "cqr/simulate.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

namespace cqr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  for (char ch : value + ",") {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += ch;
    }
  }
  return out;
}

struct LineContext {
  int line;
  std::string key;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ConfigError, "line " + std::to_string(line) + " (" + key + "): " + msg);
  }

  double real(const std::string& s) const {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("'" + s + "' is not a number");
    return v;
  }

  long long integer(const std::string& s) const {
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("'" + s + "' is not an integer");
    return v;
  }

  std::uint64_t unsigned64(const std::string& s) const {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("'" + s + "' is not an unsigned integer");
    return v;
  }

  bool boolean(const std::string& s) const {
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    fail("'" + s + "' is not a boolean");
  }

  std::string single(const std::vector<std::string>& items) const {
    if (items.size() != 1) fail("expected a single value");
    return items.front();
  }
};

std::vector<int> ints(const LineContext& ctx, const std::vector<std::string>& items) {
  std::vector<int> out;
  for (const auto& s : items) out.push_back(static_cast<int>(ctx.integer(s)));
  return out;
}

std::vector<double> reals(const LineContext& ctx, const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& s : items) out.push_back(ctx.real(s));
  return out;
}

using Setter = std::function<void(Scenario&, const LineContext&, const std::vector<std::string>&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"case", [](Scenario& s, const LineContext& c, const auto& v) { s.cases = ints(c, v); }},
      {"tau", [](Scenario& s, const LineContext& c, const auto& v) { s.taus = reals(c, v); }},
      {"censor_prop", [](Scenario& s, const LineContext& c, const auto& v) { s.censor_props = reals(c, v); }},
      {"N", [](Scenario& s, const LineContext& c, const auto& v) { s.Ns = ints(c, v); }},
      {"n_i", [](Scenario& s, const LineContext& c, const auto& v) { s.base.n_i = static_cast<int>(c.integer(c.single(v))); }},
      {"alpha", [](Scenario& s, const LineContext& c, const auto& v) { s.base.alpha = c.real(c.single(v)); }},
      {"beta", [](Scenario& s, const LineContext& c, const auto& v) { s.base.beta = c.real(c.single(v)); }},
      {"reps", [](Scenario& s, const LineContext& c, const auto& v) { s.base.reps = static_cast<int>(c.integer(c.single(v))); }},
      {"seed", [](Scenario& s, const LineContext& c, const auto& v) { s.base.seed = c.unsigned64(c.single(v)); }},
      {"level", [](Scenario& s, const LineContext& c, const auto& v) { s.base.level = c.real(c.single(v)); }},
      {"B", [](Scenario& s, const LineContext& c, const auto& v) { s.base.B = static_cast<int>(c.integer(c.single(v))); }},
      {"intervals", [](Scenario& s, const LineContext& c, const auto& v) { s.base.intervals = c.boolean(c.single(v)); }},
      {"methods",
       [](Scenario& s, const LineContext& c, const auto& v) {
         s.base.methods.clear();
         for (const auto& name : v) {
           try {
             s.base.methods.push_back(parse_method(name));
           } catch (const Error& e) {
             c.fail(e.what());
           }
         }
       }},
      {"naive_delta",
       [](Scenario& s, const LineContext& c, const auto& v) {
         const std::string m = c.single(v);
         if (m == "estimated") s.base.naive_delta = DeltaMode::Estimated;
         else if (m == "independence" || m == "forced_independence") s.base.naive_delta = DeltaMode::ForcedIndependence;
         else c.fail("expected 'estimated' or 'independence'");
       }},
      {"beta_grid", [](Scenario& s, const LineContext& c, const auto& v) { s.beta_grid = reals(c, v); }},
      {"n_grid", [](Scenario& s, const LineContext& c, const auto& v) { s.n_grid = ints(c, v); }},
      {"beta0_scale", [](Scenario& s, const LineContext& c, const auto& v) { s.beta0_scale = c.real(c.single(v)); }},
      {"max_iterations", [](Scenario& s, const LineContext& c, const auto& v) { s.base.fit.max_iterations = static_cast<int>(c.integer(c.single(v))); }},
      {"n_starts", [](Scenario& s, const LineContext& c, const auto& v) { s.base.fit.n_starts = static_cast<int>(c.integer(c.single(v))); }},
      {"perturbation", [](Scenario& s, const LineContext& c, const auto& v) { s.base.fit.start_perturbation_scale = c.real(c.single(v)); }},
  };
  return table;
}

}  // namespace

Scenario parse_scenario(std::istream& in) {
  Scenario scenario;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(line) + ": expected 'key = value'");
    const LineContext ctx{line, trim(std::string_view(text).substr(0, eq))};
    const auto items = split_list(trim(std::string_view(text).substr(eq + 1)));
    if (items.empty()) ctx.fail("missing value");
    const auto it = setters().find(ctx.key);
    if (it == setters().end()) ctx.fail("unknown key");
    it->second(scenario, ctx, items);
  }
  for (const auto& cfg : expand(scenario)) validate_config(cfg);
  return scenario;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open scenario file '" + path + "'");
  return parse_scenario(in);
}

std::vector<SimulationConfig> expand(const Scenario& scenario) {
  std::vector<SimulationConfig> out;
  for (int c : scenario.cases)
    for (double t : scenario.taus)
      for (double cp : scenario.censor_props)
        for (int N : scenario.Ns) {
          SimulationConfig cfg = scenario.base;
          cfg.case_id = c;
          cfg.tau = t;
          cfg.censor_prop = cp;
          cfg.N = N;
          out.push_back(cfg);
        }
  return out;
}

std::vector<MethodSummary> run_scenario(const Scenario& scenario, ScenarioMode mode, int workers,
                                        double* runtime_seconds) {
  std::vector<MethodSummary> rows;
  double runtime = 0.0;
  auto append = [&](const SimulationReport& r) {
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    runtime += r.runtime_seconds;
  };
  for (const auto& cfg : expand(scenario)) {
    if (mode == ScenarioMode::Simulate) {
      append(monte_carlo(cfg, workers));
    } else if (!scenario.beta_grid.empty()) {
      for (const auto& pt : power_curve(cfg, scenario.beta_grid, workers)) append(pt.report);
    } else if (!scenario.n_grid.empty()) {
      for (const auto& pt : local_power_curve(cfg, scenario.n_grid, scenario.beta0_scale, workers)) append(pt.report);
    } else {
      throw Error(ErrorCode::ConfigError, "power needs beta_grid or n_grid in the scenario");
    }
  }
  if (runtime_seconds) *runtime_seconds = runtime;
  return rows;
}

}  // namespace cqr
