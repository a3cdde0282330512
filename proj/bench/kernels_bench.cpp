// OpenMP kernels against their serial references.
#include <benchmark/benchmark.h>

#include <cstdlib>
#include <string>

#include "darlr/engine.hpp"
#include "darlr/kernels.hpp"
#include "darlr/rng.hpp"
#include "darlr/world_model.hpp"

using namespace darlr;

namespace {

Eigen::MatrixXd random_rows(int rows, int cols) {
  Rng rng(7);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform01(rng);
  return m;
}

const Dataset& bench_data() {
  static const Dataset d = generate_synthetic({.users = 200, .items = 150, .log_density = 0.05, .seed = 3});
  return d;
}

const WorldModel& bench_wm() {
  static const WorldModel wm = train_world_model(bench_data(), {.epochs = 5, .seed = 3});
  return wm;
}

void BM_RowCosines(benchmark::State& state) {
  const Eigen::MatrixXd m = random_rows(static_cast<int>(state.range(0)), 500);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::row_cosines(m, 0));
}

void BM_RowCosinesSerial(benchmark::State& state) {
  const Eigen::MatrixXd m = random_rows(static_cast<int>(state.range(0)), 500);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::row_cosines_serial(m, 0));
}

void BM_Predict(benchmark::State& state) {
  const WorldModel& wm = bench_wm();
  for (auto _ : state) benchmark::DoNotOptimize(wm.predict());
}

void BM_PredictReference(benchmark::State& state) {
  const WorldModel& wm = bench_wm();
  for (auto _ : state) benchmark::DoNotOptimize(wm.predict_reference());
}

// Evaluation with the worker cap given by the argument.
void BM_Evaluate(benchmark::State& state) {
  const Dataset& d = bench_data();
  EngineConfig cfg;
  RecommenderAgent agent({.num_users = d.num_users(), .num_items = d.num_items()}, 1);
  ::setenv("DARLR_THREADS", std::to_string(state.range(0)).c_str(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(agent, d.items.category, *d.truth, cfg, 64, 5));
  ::unsetenv("DARLR_THREADS");
}

}  // namespace

BENCHMARK(BM_RowCosines)->Arg(100)->Arg(1000)->Arg(5000);
BENCHMARK(BM_RowCosinesSerial)->Arg(100)->Arg(1000)->Arg(5000);
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
