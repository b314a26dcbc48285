#include "cqr/simulate.hpp"

#include "cqr/distributions.hpp"
#include "cqr/error.hpp"
#include "cqr/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>

namespace cqr {

using Eigen::VectorXd;

namespace {

constexpr Method kMethods[] = {Method::Omni, Method::QRS, Method::Indep, Method::Naive1, Method::Naive2, Method::Boot};

double random_effect_variance(int case_id) {
  switch (case_id) {
    case 1: return 0.0;
    case 3: return 9.0;
    default: return 1.0;
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

// Neumaier summation; terms are added in index order so results do not
// depend on how replicates were scheduled.
class Accumulator {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
    ++count_;
  }
  int count() const { return count_; }
  double mean() const {
    return count_ == 0 ? std::numeric_limits<double>::quiet_NaN() : (sum_ + comp_) / count_;
  }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
  int count_ = 0;
};

}  // namespace

const char* to_string(Method method) noexcept {
  switch (method) {
    case Method::Omni: return "Omni";
    case Method::QRS: return "QRS";
    case Method::Indep: return "Indep";
    case Method::Naive1: return "Naive1";
    case Method::Naive2: return "Naive2";
    case Method::Boot: return "Boot";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  const std::string key = lower(name);
  for (Method m : kMethods)
    if (lower(to_string(m)) == key) return m;
  throw Error(ErrorCode::ConfigError, "unknown method '" + std::string(name) + "'");
}

std::vector<Method> all_methods() { return {std::begin(kMethods), std::end(kMethods)}; }

void validate_config(const SimulationConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (c.case_id < 1 || c.case_id > 4) fail("case must be 1, 2, 3 or 4");
  if (c.N < 2 || c.N % 2 != 0) fail("N must be even and at least 2");
  if (c.n_i < 1) fail("n_i must be positive");
  if (!(c.tau > 0.0 && c.tau < 1.0)) fail("tau must lie in (0, 1)");
  if (!(c.censor_prop >= 0.0 && c.censor_prop < 1.0)) fail("censor_prop must lie in [0, 1)");
  if (c.reps < 1) fail("reps must be at least 1");
  if (!(c.level > 0.0 && c.level < 1.0)) fail("level must lie in (0, 1)");
  if (c.B < 1) fail("B must be at least 1");
  if (c.methods.empty()) fail("no methods requested");
  if (!std::isfinite(c.alpha) || !std::isfinite(c.beta)) fail("alpha and beta must be finite");
  if (c.fit.n_starts < 1 || c.fit.max_iterations < 1) fail("n_starts and max_iterations must be positive");
}

double error_quantile(int case_id, double tau) {
  return std::sqrt(1.0 + random_effect_variance(case_id)) * normal_quantile(tau);
}

GeneratedData gen_case(const SimulationConfig& config, std::size_t replicate) {
  std::mt19937_64 rng(stream_seed(config.seed, replicate, config.stream));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd_a = std::sqrt(random_effect_variance(config.case_id));
  const double fq = error_quantile(config.case_id, config.tau);
  const auto N = static_cast<std::size_t>(config.N);
  const auto n_i = static_cast<std::size_t>(config.n_i);
  const std::size_t n = N * n_i;

  LongitudinalDataset latent;
  latent.p = 2;
  latent.q = 1;
  latent.n = n;
  latent.subjects.reserve(N);
  std::vector<double> ystar;
  ystar.reserve(n);
  for (std::size_t i = 0; i < N; ++i) {
    SubjectBlock block{std::to_string(i + 1), {}};
    block.rows.reserve(n_i);
    const double a = sd_a > 0.0 ? sd_a * gauss(rng) : 0.0;
    const double z = i >= N / 2 ? 1.0 : 0.0;
    for (std::size_t j = 0; j < n_i; ++j) {
      const double x = gauss(rng);
      const double e = gauss(rng);
      const double sigma = config.case_id == 4 ? 1.0 + std::abs(x) : 1.0;
      Row row;
      row.y = 1.0 + config.alpha * x + config.beta * z + sigma * (a + e - fq);
      row.x = {1.0, x};
      row.z = {z};
      ystar.push_back(row.y);
      block.rows.push_back(std::move(row));
    }
    latent.subjects.push_back(std::move(block));
  }

  GeneratedData out;
  const auto k = static_cast<std::size_t>(std::lround(config.censor_prop * static_cast<double>(n)));
  if (k == 0) {
    out.threshold = *std::min_element(ystar.begin(), ystar.end()) - 1.0;
  } else {
    std::nth_element(ystar.begin(), ystar.begin() + static_cast<std::ptrdiff_t>(k - 1), ystar.end());
    out.threshold = ystar[k - 1];
  }

  out.observed = latent;
  std::size_t censored = 0;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < n_i; ++j) {
      Row& lat = latent.subjects[i].rows[j];
      Row& obs = out.observed.subjects[i].rows[j];
      lat.y -= out.threshold;
      lat.censor_limit = std::numeric_limits<double>::lowest();
      lat.is_censored = false;
      const bool cens = lat.y <= 0.0;
      obs.y = cens ? 0.0 : lat.y;
      obs.censor_limit = 0.0;
      obs.is_censored = cens;
      censored += cens ? 1 : 0;
    }
  }
  out.latent = std::move(latent);
  out.censored_fraction = static_cast<double>(censored) / static_cast<double>(n);
  return out;
}

namespace {

// Fits shared between methods of one replicate, computed on first use.
class ReplicateContext {
 public:
  ReplicateContext(const SimulationConfig& config, std::size_t replicate)
      : config_(config), replicate_(replicate), data_(gen_case(config, replicate)), tau_(config.tau) {}

  const GeneratedData& data() const { return data_; }
  QuantileLevel tau() const { return tau_; }
  DesignSelector estimate_design() const {
    return config_.beta == 0.0 ? DesignSelector::XOnly : DesignSelector::JointXZ;
  }

  const PowellFit& powell_null() {
    if (!powell_null_) powell_null_ = fit_powell(data_.observed, tau_, config_.fit, DesignSelector::XOnly);
    return *powell_null_;
  }
  const PowellFit& powell_joint() {
    if (!powell_joint_) powell_joint_ = fit_powell(data_.observed, tau_, config_.fit, DesignSelector::JointXZ);
    return *powell_joint_;
  }
  const PowellFit& powell_estimate() {
    return estimate_design() == DesignSelector::XOnly ? powell_null() : powell_joint();
  }
  const LongitudinalDataset& uncensored_rows() {
    if (!uncensored_rows_)
      uncensored_rows_ = filter_rows(data_.observed, [](const Row& r) { return !r.censored(); });
    return *uncensored_rows_;
  }

  MethodOutcome run(Method method) {
    MethodOutcome out;
    out.method = method;
    try {
      switch (method) {
        case Method::Omni: rank_method(out, data_.latent, DeltaMode::Estimated); break;
        case Method::QRS: censored_method(out, DeltaMode::Estimated); break;
        case Method::Indep: censored_method(out, DeltaMode::ForcedIndependence); break;
        case Method::Naive1: rank_method(out, data_.observed, config_.naive_delta); break;
        case Method::Naive2: rank_method(out, uncensored_rows(), config_.naive_delta); break;
        case Method::Boot: boot_method(out); break;
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out = MethodOutcome{};
      out.method = method;
      out.error = e.what();
    }
    return out;
  }

 private:
  double level() const { return 1.0 - config_.level; }

  void set_interval(MethodOutcome& out, const ConfidenceInterval& ci) {
    out.has_interval = true;
    out.ci_lower = ci.lower;
    out.ci_upper = ci.upper;
  }

  // Uncensored quantile fit and delta-adjusted rank score test.
  void rank_method(MethodOutcome& out, const LongitudinalDataset& data, DeltaMode mode) {
    const PowellFit null_fit = fit_uncensored(data, tau_, DesignSelector::XOnly);
    const PowellFit est =
        estimate_design() == DesignSelector::XOnly ? null_fit : fit_uncensored(data, tau_, DesignSelector::JointXZ);
    out.alpha_hat = est.coef[1];
    const RankScoreResult test = qrs_test(data, null_fit, tau_, mode);
    out.has_decision = true;
    out.reject = test.p_value < config_.level;
    if (config_.intervals)
      set_interval(out, invert_ci(data, tau_, 0, level(), config_.fit, {mode, NullFit::Uncensored}));
  }

  void censored_method(MethodOutcome& out, DeltaMode mode) {
    out.alpha_hat = powell_estimate().coef[1];
    const RankScoreResult test = qrs_test(data_.observed, powell_null(), tau_, mode);
    out.has_decision = true;
    out.reject = test.p_value < config_.level;
    if (config_.intervals)
      set_interval(out, invert_ci(data_.observed, tau_, 0, level(), config_.fit, {mode, NullFit::Censored}));
  }

  void boot_method(MethodOutcome& out) {
    const PowellFit& joint = powell_joint();
    out.alpha_hat = joint.coef[1];
    BootstrapConfig boot;
    boot.B = config_.B;
    boot.level = level();
    boot.seed = stream_seed(config_.seed ^ 0x626f6f7473747270ULL, replicate_, config_.stream);
    const BootstrapResult res = block_bootstrap_ci(data_.observed, tau_, boot, joint.coef, 1);
    const ConfidenceInterval& ci = res.intervals.back();
    out.has_decision = true;
    out.reject = !ci.contains(0.0);
    set_interval(out, ci);
  }

  const SimulationConfig& config_;
  std::size_t replicate_;
  GeneratedData data_;
  QuantileLevel tau_;
  std::optional<PowellFit> powell_null_;
  std::optional<PowellFit> powell_joint_;
  std::optional<LongitudinalDataset> uncensored_rows_;
};

}  // namespace

ReplicateRecord run_replicate(const SimulationConfig& config, std::size_t replicate) {
  ReplicateContext ctx(config, replicate);
  ReplicateRecord rec;
  rec.replicate = replicate;
  rec.censored_fraction = ctx.data().censored_fraction;
  for (Method m : config.methods) rec.outcomes.push_back(ctx.run(m));
  return rec;
}

SimulationReport summarize(const SimulationConfig& config, const std::vector<ReplicateRecord>& records) {
  SimulationReport report;
  Accumulator cens;
  for (const auto& r : records) cens.add(r.censored_fraction);
  report.mean_censored_fraction = cens.mean();

  for (std::size_t k = 0; k < config.methods.size(); ++k) {
    Accumulator est, sq, rej, cover, len;
    int failures = 0;
    for (const auto& r : records) {
      const MethodOutcome& o = r.outcomes[k];
      if (!o.ok) {
        ++failures;
        continue;
      }
      est.add(o.alpha_hat);
      sq.add((o.alpha_hat - config.alpha) * (o.alpha_hat - config.alpha));
      if (o.has_decision) rej.add(o.reject ? 1.0 : 0.0);
      if (o.has_interval) {
        cover.add(o.ci_lower <= config.beta && config.beta <= o.ci_upper ? 1.0 : 0.0);
        len.add(o.ci_upper - o.ci_lower);
      }
    }
    MethodSummary s;
    s.method = config.methods[k];
    s.case_id = config.case_id;
    s.tau = config.tau;
    s.censor_prop = config.censor_prop;
    s.N = config.N;
    s.beta = config.beta;
    s.reps = static_cast<int>(records.size());
    s.failures = failures;
    s.bias = est.mean() - config.alpha;
    s.mse = sq.mean();
    s.rejection_rate = rej.mean();
    s.coverage = cover.mean();
    s.mean_length = len.mean();
    report.rows.push_back(s);
  }
  return report;
}

namespace {

template <class Loop>
SimulationReport run_monte_carlo(const SimulationConfig& config, Loop&& loop) {
  validate_config(config);
  const auto start = std::chrono::steady_clock::now();
  std::vector<ReplicateRecord> records(static_cast<std::size_t>(config.reps));
  loop(records.size(), [&](std::size_t r) { records[r] = run_replicate(config, r); });
  SimulationReport report = summarize(config, records);
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

SimulationReport monte_carlo(const SimulationConfig& config, int workers) {
  return run_monte_carlo(config, [workers](std::size_t n, auto&& body) { parallel_for(n, workers, body); });
}

SimulationReport monte_carlo_serial(const SimulationConfig& config) {
  return run_monte_carlo(config, [](std::size_t n, auto&& body) { serial_for(n, body); });
}

std::vector<PowerPoint> power_curve(const SimulationConfig& config, const std::vector<double>& beta_grid,
                                    int workers) {
  std::vector<PowerPoint> out;
  for (std::size_t g = 0; g < beta_grid.size(); ++g) {
    SimulationConfig c = config;
    c.beta = beta_grid[g];
    c.stream = g;
    out.push_back({c.beta, c.N, monte_carlo(c, workers)});
  }
  return out;
}

std::vector<PowerPoint> local_power_curve(const SimulationConfig& config, const std::vector<int>& n_grid,
                                          double beta0_scale, int workers) {
  std::vector<PowerPoint> out;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const int n = n_grid[g];
    if (n <= 0 || n % config.n_i != 0)
      throw Error(ErrorCode::ConfigError, "n = " + std::to_string(n) + " is not a multiple of n_i");
    SimulationConfig c = config;
    c.N = n / config.n_i;
    c.beta = beta0_scale / std::sqrt(static_cast<double>(n));
    c.stream = g;
    out.push_back({c.beta, c.N, monte_carlo(c, workers)});
  }
  return out;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_report_tsv(std::ostream& out, const std::vector<MethodSummary>& rows) {
  out << "method\tcase\ttau\tcensor_prop\tN\tbeta\treps\tfailures\tbias\tmse\trejection_rate\tcoverage\tmean_length\n";
  for (const auto& r : rows) {
    out << to_string(r.method) << '\t' << r.case_id << '\t' << fmt(r.tau) << '\t' << fmt(r.censor_prop) << '\t'
        << r.N << '\t' << fmt(r.beta) << '\t' << r.reps << '\t' << r.failures << '\t' << fmt(r.bias) << '\t'
        << fmt(r.mse) << '\t' << fmt(r.rejection_rate) << '\t' << fmt(r.coverage) << '\t' << fmt(r.mean_length)
        << '\n';
  }
}

}  // namespace cqr
