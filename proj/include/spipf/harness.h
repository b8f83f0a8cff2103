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

// Monte-Carlo experiments: per-trial ground truth shared by every algorithm,
// error and mode metrics, aggregation and CSV output.

#ifndef SPIPF_HARNESS_H_
#define SPIPF_HARNESS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spipf/config.h"
#include "spipf/hybrid_system.h"
#include "spipf/particle_filter.h"
#include "spipf/systems.h"

namespace spipf {

// Per-step squared error. When the estimate and the truth are in different
// modes, the estimate is mapped through the reset into the truth's mode if it
// lags the truth's nearest transition; if it leads, the truth is mapped into
// the estimate's mode instead.
std::vector<double> SquaredErrors(const HybridSystem& system,
                                  const std::vector<EstimateRecord>& records,
                                  const std::vector<HybridState>& truth);

// Mean of SquaredErrors over indices [first, end).
double MeanMse(const HybridSystem& system,
               const std::vector<EstimateRecord>& records,
               const std::vector<HybridState>& truth, int first = 0);

struct ModeMetrics {
  std::vector<double> correct;  // 1 where mode_hat matches the truth
  // Index of the first record whose mode differs from the truth's initial
  // mode, minus the index of the first post-transition truth state. Empty
  // (censored) if either never happens.
  std::optional<int> offset_steps;
};

ModeMetrics ComputeModeMetrics(const std::vector<EstimateRecord>& records,
                               const TruthRun& truth);

// Index of the first truth state after the first transition, or -1.
int FirstPostTransitionIndex(const TruthRun& truth);

struct PairedTTest {
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;
  int df = 0;
};

// One-sided paired t-test of H1: mean(a - b) < 0.
PairedTTest PairedOneSidedTTest(std::span<const double> a,
                                std::span<const double> b);

struct TrialRow {
  std::string algorithm;
  double sweep_value = 0.0;
  int trial = 0;
  bool failed = false;
  std::string error;
  double mse = 0.0;
  double post_mse = 0.0;  // NaN when the truth never transitions
  bool retained = false;
  std::optional<int> offset_steps;
  int truth_transition_index = -1;
  std::uint64_t path_hash = 0;
  RunDiagnostics diagnostics;
  std::vector<double> sq_err;
  std::vector<double> esse;
  std::vector<double> correct;
};

struct MetricsSummary {
  std::string algorithm;
  double sweep_value = 0.0;
  double dt = 0.0;
  int n_trials = 0;
  int failed = 0;
  int retained = 0;
  double mean_mse = 0.0;
  double mse_covariance = 0.0;  // across-trial sample variance
  int post_retained = 0;
  double post_mean_mse = 0.0;
  double post_mse_covariance = 0.0;
  double within_tolerance = 0.0;  // fraction with |offset| <= 0.2 s
  int censored = 0;
  std::vector<double> times;
  std::vector<double> sq_err_mean;
  std::vector<double> sq_err_var;
  std::vector<double> esse_series;
  std::vector<double> mode_accuracy_series;
  // Trial-averaged gamma indexed by steps since the true transition.
  std::map<int, std::pair<double, int>> esse_aligned;  // offset -> (mean, n)
  std::map<int, int> offset_histogram;                  // steps -> count
};

struct ExperimentResult {
  std::vector<TrialRow> trials;
  std::vector<MetricsSummary> summaries;
};

struct ExperimentOptions {
  bool write_outputs = true;
};

// Filter settings for one trial; the seed is derived from (seed, trial).
FilterConfig TrialFilterConfig(const FilterConfig& base, int trial);

// Ground truth for one trial. The initial state depends on (seed, trial);
// process and measurement noise on (seed, trial, dt).
TruthRun SimulateTrial(const ExperimentConfig& config,
                       const HybridSystem& system, double dt, int trial);

// Dispatches "spipf", "spipf0", "sir" or "skf".
RunResult RunAlgorithm(const std::string& name, const HybridSystem& system,
                       const MeasurementPath& path, const FilterConfig& config);

// Trials run in parallel under OpenMP with isolated RNG streams; aggregation
// is serial. Failed trials are recorded and excluded; more than half failing
// for any (algorithm, sweep value) raises kExperiment after outputs are
// written.
ExperimentResult RunExperiment(const ExperimentConfig& config,
                               const ExperimentOptions& options = {});

MetricsSummary Summarize(const std::vector<const TrialRow*>& rows,
                         const std::string& algorithm, double sweep_value,
                         double dt, double t0);

}  // namespace spipf

#endif  // SPIPF_HARNESS_H_
