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

// Path integral particle filter over a sliding window. Each window solves an
// iLQR problem on the measurement cost, rolls every particle out under the
// resulting feedback policy and weights it by exp(-S_u).

#ifndef SPIPF_PARTICLE_FILTER_H_
#define SPIPF_PARTICLE_FILTER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "spipf/hybrid_system.h"
#include "spipf/ilqr.h"
#include "spipf/measurement.h"
#include "spipf/rng.h"

namespace spipf {

// Mixture of per-mode Gaussians. Modes with zero probability may leave their
// mean and covariance empty.
struct PriorSpec {
  std::vector<double> mode_probabilities;
  std::vector<Vector> mean;
  std::vector<Matrix> cov;

  void Validate(const HybridSystem& system) const;
  HybridState Sample(Rng& rng) const;
};

enum class Execution { kSerial, kParallel };

// Prior weights given to resampled particles. kAsWritten uses exp(+S_u) over
// the whole window, kLagCorrected only over the part of the window after the
// next prior time.
enum class ResampleReweight { kAsWritten, kLagCorrected };

struct FilterConfig {
  int K = 50;
  int H = 10;
  double dt = 0.01;
  double epsilon = 0.1;
  double gamma_thres = 0.5;
  bool resampling_enabled = true;
  PriorSpec prior;
  std::uint64_t seed = 0;
  ResampleReweight reweight = ResampleReweight::kAsWritten;
  ILQRSettings ilqr;
  Execution execution = Execution::kSerial;
  bool record_particles = false;

  void Validate() const;
};

struct Particle {
  // Prior state at the window start and its log weight.
  HybridState prior;
  double log_w_prior = 0.0;
  // State at the window end and its unnormalized filtered log weight.
  HybridState current;
  double log_w_filtered = 0.0;
  std::vector<Vector> trajectory;
  std::vector<ModeId> mode_history;
  bool dead = false;
};

struct Estimate {
  Vector x_hat;
  ModeId mode_hat;
  double contact = 0.0;
};

struct EstimateRecord {
  double t = 0.0;
  Vector x_hat;
  ModeId mode_hat;
  double contact = 0.0;
  double esse = 1.0;
  // Normalized filtered weights, filled when record_particles is set.
  std::vector<double> weights;
};

struct RunDiagnostics {
  int resampling_events = 0;
  int solver_stalls = 0;
  int solver_fallbacks = 0;
  int dead_particles = 0;
};

struct RunResult {
  std::vector<EstimateRecord> records;  // one per grid point, t_0..t_L
  RunDiagnostics diagnostics;
};

enum class ControlPolicy { kIlqr, kZero };

// Normalizes in place with log-sum-exp. Entries of -inf stay -inf. Throws
// kDegenerateEnsemble when every entry is -inf or non-finite.
void NormalizeLogWeights(std::vector<double>* log_w);

// 1 / (K sum w^2) for normalized log weights.
double EffectiveRatio(std::span<const double> log_w);

// Multinomial draw of `count` indices with probabilities exp(log_w).
std::vector<int> MultinomialResample(std::span<const double> log_w, int count,
                                     Rng& rng);

// Mode with the largest summed weight (ties go to the lower index), then the
// weighted mean of that mode's states. `log_w` need not be normalized.
Estimate VoteAndEstimate(const HybridSystem& system,
                         std::span<const HybridState> states,
                         std::span<const double> log_w);

std::vector<Particle> SampleEnsemble(const HybridSystem& system,
                                     const PriorSpec& prior, int count,
                                     std::uint64_t seed);

// Rolls one particle out from its prior over the evaluator's window and sets
// current, trajectory, log_w_filtered. Returns S_u over the window and over
// its first step through the out-parameters. Recoverable numerical failures
// mark the particle dead instead of throwing.
void ParticleUpdate(const HybridSystem& system, const GainSchedule& gains,
                    const ReferenceTable& table, const CostEvaluator& eval,
                    Particle* particle, Rng& rng, double* s_total,
                    double* s_first, HybridState* first_state);

// Runs the filter and returns one estimate per grid point of `path`.
RunResult Run(const HybridSystem& system, const MeasurementPath& path,
              const FilterConfig& config,
              ControlPolicy policy = ControlPolicy::kIlqr);

}  // namespace spipf

#endif  // SPIPF_PARTICLE_FILTER_H_
