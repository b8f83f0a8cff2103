// Copyright 2026 The SPIPF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference loop vs OpenMP loop for the per-particle kernels.

#include <benchmark/benchmark.h>

#include "spipf/ilqr.h"
#include "spipf/kernels.h"
#include "spipf/measurement.h"
#include "spipf/particle_filter.h"
#include "spipf/rng.h"
#include "spipf/systems.h"

namespace spipf {
namespace {

struct BallFixture {
  HybridSystem system = BouncingBall({});
  TruthRun truth;
  PriorSpec prior;

  BallFixture() {
    prior.mode_probabilities = {1.0, 0.0};
    prior.mean = {Vector::Ones(2), Vector()};
    prior.mean[0][1] = 0.0;
    prior.cov = {0.0025 * Matrix::Identity(2, 2), Matrix()};
    Rng process(7, StreamTag::kTruthProcess);
    Rng meas(7, StreamTag::kMeasurement);
    truth = SimulateTruth(system, HybridState{kBallFalling, prior.mean[0], 0.0, 0.0}, 0.8,
                          0.01, process, meas);
  }
};

void BM_UpdateEnsemble(benchmark::State& state, Execution execution) {
  BallFixture f;
  const int K = static_cast<int>(state.range(0));
  const CostEvaluator eval(f.system, f.truth.measurements, 40, 50, 0.1);
  std::vector<Particle> base = SampleEnsemble(f.system, f.prior, K, 3);
  for (Particle& p : base) p.prior.t = f.truth.measurements.times[40];
  const HybridState x0{kBallFalling, f.truth.states[40].x, f.truth.measurements.times[40], 0.0};
  const GainSchedule gains = SolveWindow(f.system, eval, x0);
  const ReferenceTable table(f.system, gains);
  WindowOutcome out;
  for (auto _ : state) {
    std::vector<Particle> particles = base;
    UpdateEnsemble(f.system, gains, table, eval, &particles, 3, 50, execution, &out);
    benchmark::DoNotOptimize(out.s_total.data());
  }
  state.SetItemsProcessed(state.iterations() * K);
  state.counters["threads"] = execution == Execution::kParallel ? KernelThreads() : 1;
}

void BM_PropagateUncontrolled(benchmark::State& state, Execution execution) {
  BallFixture f;
  const int K = static_cast<int>(state.range(0));
  std::vector<HybridState> base;
  for (const Particle& p : SampleEnsemble(f.system, f.prior, K, 3)) base.push_back(p.prior);
  for (auto _ : state) {
    std::vector<HybridState> states = base;
    std::vector<char> alive(K, 1);
    for (int step = 1; step <= 10; ++step) {
      PropagateUncontrolled(f.system, &states, &alive, 0.01, 3, step, execution);
    }
    benchmark::DoNotOptimize(states.data());
  }
  state.SetItemsProcessed(state.iterations() * K * 10);
}

BENCHMARK_CAPTURE(BM_UpdateEnsemble, serial, Execution::kSerial)->Arg(50)->Arg(500);
BENCHMARK_CAPTURE(BM_UpdateEnsemble, parallel, Execution::kParallel)->Arg(50)->Arg(500);
BENCHMARK_CAPTURE(BM_PropagateUncontrolled, serial, Execution::kSerial)->Arg(500);
BENCHMARK_CAPTURE(BM_PropagateUncontrolled, parallel, Execution::kParallel)->Arg(500);

}  // namespace
}  // namespace spipf

BENCHMARK_MAIN();
