#include "cli.hpp"

#include "cqr/error.hpp"
#include "cqr/intervals.hpp"
#include "cqr/parallel.hpp"
#include "cqr/simulate.hpp"
#include "json_output.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace cqr::cli {

namespace {

struct Options {
  std::string data;
  std::string x = "1";
  std::string z;
  std::string config;
  std::string out;
  std::string delta = "estimated";
  std::vector<double> beta0;
  double tau = 0.5;
  double level = 0.95;
  std::uint64_t seed = 0;
  int workers = 0;
  std::size_t coef = 0;
  int B = 500;
  bool joint = false;
};

DeltaMode parse_delta(const std::string& s) {
  if (s == "estimated") return DeltaMode::Estimated;
  if (s == "independence" || s == "forced_independence") return DeltaMode::ForcedIndependence;
  throw Error(ErrorCode::InvalidArgument, "--delta must be 'estimated' or 'independence'");
}

LongitudinalDataset load(const Options& o, bool need_z) {
  if (need_z && o.z.empty()) throw Error(ErrorCode::InvalidArgument, "--z is required for this command");
  return build_design(parse_formula(o.x, o.z), parse_csv_file(o.data));
}

void emit(const Options& o, std::ostream& out, const std::string& text) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(o.out, std::ios::binary);
  if (!file) throw Error(ErrorCode::InvalidArgument, "cannot write '" + o.out + "'");
  file << text;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

void report_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

FitConfig fit_config(const Options& o, const CLI::App& sub) {
  FitConfig cfg;
  if (sub.count("--seed")) cfg.seed = o.seed;
  return cfg;
}

int dispatch(const CLI::App& app, Options& o, std::ostream& out, std::ostream& err) {
  const CLI::App* sub = app.get_subcommands().front();
  const std::string verb = sub->get_name();
  const QuantileLevel tau(o.tau);

  if (verb == "fit") {
    const auto sel = o.joint ? DesignSelector::JointXZ : DesignSelector::XOnly;
    const auto data = load(o, o.joint);
    const PowellFit fit = fit_powell(data, tau, fit_config(o, *sub), sel);
    emit(o, out, dump(fit_json(fit, o.tau, sel)));
  } else if (verb == "test") {
    const auto data = load(o, true);
    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.q));
    if (!o.beta0.empty()) {
      if (o.beta0.size() != data.q) throw Error(ErrorCode::InvalidArgument, "--beta0 needs one value per z column");
      beta0 = Eigen::Map<const Eigen::VectorXd>(o.beta0.data(), static_cast<Eigen::Index>(o.beta0.size()));
    }
    const RankScoreResult r = test_at_beta0(data, tau, beta0, fit_config(o, *sub), {parse_delta(o.delta)});
    report_warnings(err, r.warnings);
    emit(o, out, dump(test_json(r, o.tau, beta0)));
  } else if (verb == "ci") {
    const auto data = load(o, true);
    if (o.coef >= data.q) throw Error(ErrorCode::InvalidArgument, "--coef is out of range");
    const ConfidenceInterval ci = invert_ci(data, tau, o.coef, o.level, fit_config(o, *sub), {parse_delta(o.delta)});
    report_warnings(err, ci.warnings);
    emit(o, out, dump(interval_json(ci, o.tau)));
  } else if (verb == "boot") {
    const auto data = load(o, true);
    BootstrapConfig boot;
    boot.B = o.B;
    boot.level = o.level;
    if (sub->count("--seed")) boot.seed = o.seed;
    const BootstrapResult r = block_bootstrap_ci(data, tau, boot, FitConfig{}, o.workers);
    emit(o, out, dump(bootstrap_json(r, boot, o.tau)));
  } else {
    Scenario scenario = parse_scenario_file(o.config);
    if (sub->count("--seed")) scenario.base.seed = o.seed;
    double runtime = 0.0;
    const auto mode = verb == "simulate" ? ScenarioMode::Simulate : ScenarioMode::Power;
    const auto rows = run_scenario(scenario, mode, o.workers, &runtime);
    std::ostringstream tsv;
    write_report_tsv(tsv, rows);
    emit(o, out, tsv.str());
    err << "runtime_seconds: " << runtime << '\n';
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Censored quantile regression for longitudinal data", "cqrlong"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* s) {
    s->add_option("--tau", o.tau, "Quantile level in (0, 1)")->check(CLI::Range(0.0, 1.0));
    s->add_option("--seed", o.seed, "RNG seed");
    s->add_option("--out", o.out, "Write results here instead of stdout");
  };
  auto data_opts = [&](CLI::App* s) {
    s->add_option("--data", o.data, "CSV input")->required();
    s->add_option("--x", o.x, "Null design terms, e.g. \"1, pw_lo(time,2)\"");
    s->add_option("--z", o.z, "Tested design terms");
  };

  auto* fit = app.add_subcommand("fit", "Powell censored quantile fit");
  data_opts(fit);
  common(fit);
  fit->add_flag("--joint", o.joint, "Fit the joint (x, z) design");

  auto* test = app.add_subcommand("test", "Rank score test of H0: beta = beta0");
  data_opts(test);
  common(test);
  test->add_option("--beta0", o.beta0, "Null value per z column (default 0)")->delimiter(',');
  test->add_option("--delta", o.delta, "estimated | independence");

  auto* ci = app.add_subcommand("ci", "Confidence interval by test inversion");
  data_opts(ci);
  common(ci);
  ci->add_option("--coef", o.coef, "Index of the z column");
  ci->add_option("--level", o.level, "Confidence level");
  ci->add_option("--delta", o.delta, "estimated | independence");

  auto* boot = app.add_subcommand("boot", "Subject-block bootstrap intervals");
  data_opts(boot);
  common(boot);
  boot->add_option("--B", o.B, "Bootstrap resamples")->check(CLI::PositiveNumber);
  boot->add_option("--level", o.level, "Confidence level");
  boot->add_option("--workers", o.workers, "Worker threads (default CQR_NUM_WORKERS)");

  for (const char* name : {"simulate", "power"}) {
    auto* s = app.add_subcommand(name, name == std::string("simulate") ? "Monte Carlo study from a scenario file"
                                                                       : "Power curve from a scenario file");
    s->add_option("--config", o.config, "Scenario file")->required();
    s->add_option("--seed", o.seed, "Override the scenario seed");
    s->add_option("--out", o.out, "Write the TSV report here instead of stdout");
    s->add_option("--workers", o.workers, "Worker threads (default CQR_NUM_WORKERS)");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return dispatch(app, o, out, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    switch (e.category()) {
      case ErrorCategory::Usage: return kUsage;
      case ErrorCategory::Data: return kData;
      case ErrorCategory::Numerical: return kNumerical;
    }
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace cqr::cli
