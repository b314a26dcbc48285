#pragma once

#include "cqr/data_model.hpp"
#include "cqr/intervals.hpp"
#include "cqr/powell.hpp"
#include "cqr/rank_score.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

enum class Method { Omni, QRS, Indep, Naive1, Naive2, Boot };

const char* to_string(Method method) noexcept;
Method parse_method(std::string_view name);
std::vector<Method> all_methods();

struct SimulationConfig {
  int case_id = 1;
  int N = 50;
  int n_i = 10;
  double tau = 0.5;
  double censor_prop = 0.2;
  double alpha = 10.0;
  double beta = 0.0;
  int reps = 500;
  std::uint64_t seed = 1;
  // Extra stream coordinate; power curves use the grid index here.
  std::uint64_t stream = 0;
  std::vector<Method> methods = all_methods();
  double level = 0.05;
  // Inversion intervals for the rank score methods (coverage of beta).
  bool intervals = false;
  DeltaMode naive_delta = DeltaMode::Estimated;
  int B = 500;
  FitConfig fit;
};

/// Throws ConfigError when the configuration is unusable.
void validate_config(const SimulationConfig& config);

struct GeneratedData {
  LongitudinalDataset observed;  // y = max(0, y* - q), limits 0
  LongitudinalDataset latent;    // y* - q, never censored
  double threshold = 0.0;        // q
  double censored_fraction = 0.0;
};

/// F_u^-1(tau) for u = a + e with a ~ N(0, var_a), e ~ N(0, 1).
double error_quantile(int case_id, double tau);

GeneratedData gen_case(const SimulationConfig& config, std::size_t replicate);

struct MethodOutcome {
  Method method = Method::QRS;
  bool ok = false;
  std::string error;
  double alpha_hat = 0.0;  // slope on x
  bool has_decision = false;
  bool reject = false;
  bool has_interval = false;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  double censored_fraction = 0.0;
  std::vector<MethodOutcome> outcomes;  // parallel to config.methods
};

ReplicateRecord run_replicate(const SimulationConfig& config, std::size_t replicate);

/// One line of the report, keyed by (method, case, tau, censor_prop, N, beta).
struct MethodSummary {
  Method method = Method::QRS;
  int case_id = 1;
  double tau = 0.5;
  double censor_prop = 0.2;
  int N = 50;
  double beta = 0.0;
  int reps = 0;
  int failures = 0;
  double bias = 0.0;
  double mse = 0.0;
  // NaN when the method produced no decisions or intervals.
  double rejection_rate = 0.0;
  double coverage = 0.0;
  double mean_length = 0.0;
};

struct SimulationReport {
  std::vector<MethodSummary> rows;
  double mean_censored_fraction = 0.0;
  double runtime_seconds = 0.0;
};

SimulationReport summarize(const SimulationConfig& config, const std::vector<ReplicateRecord>& records);

/// Replicates run on OpenMP workers (<= 0 means default_workers()).
SimulationReport monte_carlo(const SimulationConfig& config, int workers = 0);
SimulationReport monte_carlo_serial(const SimulationConfig& config);

struct PowerPoint {
  double beta = 0.0;
  int N = 0;
  SimulationReport report;
};

std::vector<PowerPoint> power_curve(const SimulationConfig& config, const std::vector<double>& beta_grid,
                                    int workers = 0);

/// beta = beta0_scale / sqrt(n) at each total sample size n = N * n_i.
std::vector<PowerPoint> local_power_curve(const SimulationConfig& config, const std::vector<int>& n_grid,
                                          double beta0_scale, int workers = 0);

void write_report_tsv(std::ostream& out, const std::vector<MethodSummary>& rows);

// ---------------------------------------------------------------------------
// Scenario files

struct Scenario {
  SimulationConfig base;
  std::vector<int> cases{1};
  std::vector<double> taus{0.5};
  std::vector<double> censor_props{0.2};
  std::vector<int> Ns{50};
  std::vector<double> beta_grid;
  std::vector<int> n_grid;
  double beta0_scale = 0.0;
};

Scenario parse_scenario(std::istream& in);
Scenario parse_scenario_file(const std::string& path);

/// Cartesian product of the list-valued keys, in case, tau, censor_prop, N order.
std::vector<SimulationConfig> expand(const Scenario& scenario);

enum class ScenarioMode { Simulate, Power };

std::vector<MethodSummary> run_scenario(const Scenario& scenario, ScenarioMode mode, int workers = 0,
                                        double* runtime_seconds = nullptr);

}  // namespace cqr
