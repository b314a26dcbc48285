#include "cqr/intervals.hpp"
#include "cqr/simulate.hpp"

#include <benchmark/benchmark.h>

namespace {

cqr::SimulationConfig study() {
  cqr::SimulationConfig c;
  c.case_id = 2;
  c.reps = 32;
  c.methods = {cqr::Method::Omni, cqr::Method::QRS, cqr::Method::Indep, cqr::Method::Naive1};
  return c;
}

struct BootInput {
  cqr::CensoredProblem problem;
  std::vector<std::size_t> block_start;
  Eigen::VectorXd gamma_hat;
};

const BootInput& boot_input() {
  static const BootInput input = [] {
    cqr::SimulationConfig c = study();
    c.beta = 1.0;
    const auto data = cqr::gen_case(c, 0).observed;
    const auto flat = cqr::flatten(data);
    BootInput in{cqr::CensoredProblem::from(data, cqr::DesignSelector::JointXZ), flat.block_start, {}};
    in.gamma_hat = cqr::fit_powell(in.problem, cqr::QuantileLevel(0.5), cqr::FitConfig{}).coef;
    return in;
  }();
  return input;
}

void BM_MonteCarloSerial(benchmark::State& state) {
  const auto c = study();
  for (auto _ : state) benchmark::DoNotOptimize(cqr::monte_carlo_serial(c));
}

void BM_MonteCarloParallel(benchmark::State& state) {
  const auto c = study();
  for (auto _ : state) benchmark::DoNotOptimize(cqr::monte_carlo(c, static_cast<int>(state.range(0))));
}

void BM_BootstrapSerial(benchmark::State& state) {
  const auto& in = boot_input();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        cqr::bootstrap_draws_serial(in.problem, in.block_start, in.gamma_hat, cqr::QuantileLevel(0.5), 200, 7));
}

void BM_BootstrapParallel(benchmark::State& state) {
  const auto& in = boot_input();
  for (auto _ : state)
    benchmark::DoNotOptimize(cqr::bootstrap_draws(in.problem, in.block_start, in.gamma_hat, cqr::QuantileLevel(0.5),
                                                  200, 7, static_cast<int>(state.range(0))));
}

}  // namespace

BENCHMARK(BM_MonteCarloSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BootstrapSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BootstrapParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
