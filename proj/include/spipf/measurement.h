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

#ifndef SPIPF_MEASUREMENT_H_
#define SPIPF_MEASUREMENT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "spipf/hybrid_system.h"
#include "spipf/rng.h"

namespace spipf {

// Discretized observation increments dY_i = h(t_i, x_i) dt + sigma_B dB_i on
// the grid times[0..L]. Increment i covers [times[i], times[i+1]].
struct MeasurementPath {
  std::vector<double> times;
  std::vector<Vector> dY;
  std::vector<double> sigma_B;  // per mode
  // Mode of the generating trajectory at the start of each increment. Kept for
  // diagnostics and CSV output only.
  std::vector<ModeId> mode_labels;

  int steps() const { return static_cast<int>(dY.size()); }
  double dt(int i) const { return times[i + 1] - times[i]; }
  // Y_i = sum_{l < i} dY_l, with Y_0 = 0.
  Vector Cumulative(int i) const;
};

// FNV-1a over the numeric content; used to assert that every algorithm in a
// trial consumed the same path.
std::uint64_t ContentHash(const MeasurementPath& path);

// One increment per step of `truth`, which must lie on a uniform grid.
MeasurementPath GenerateMeasurements(const HybridSystem& system,
                                     std::span<const HybridState> truth,
                                     Rng& rng);

class CostEvaluator {
 public:
  // Covers increments [begin, end). `epsilon` is the process noise scale that
  // weights the control terms.
  CostEvaluator(const HybridSystem& system, const MeasurementPath& path,
                int begin, int end, double epsilon);

  // (1/sigma_B^2) (0.5 |h(t_i, x)|^2 dt - h(t_i, x) . dY_i), the
  // integrated-by-parts form of the filtering cost for one step.
  double StepCost(int i, const Vector& x, ModeId mode) const;

  // Gauss-Newton derivatives of StepCost with respect to x.
  void StepCostDerivatives(int i, const Vector& x, ModeId mode, Vector* l_x,
                           Matrix* l_xx) const;

  int begin() const { return begin_; }
  int end() const { return end_; }
  int steps() const { return end_ - begin_; }
  double epsilon() const { return epsilon_; }
  double dt(int i) const { return path_->dt(i); }
  double time(int i) const { return path_->times[i]; }
  const HybridSystem& system() const { return *system_; }
  const MeasurementPath& path() const { return *path_; }

 private:
  void CheckIndex(int i) const;

  const HybridSystem* system_;
  const MeasurementPath* path_;
  int begin_;
  int end_;
  double epsilon_;
};

// Per-step contributions to S_u over the evaluator's window:
//   (1/2eps)|u_i|^2 dt + (1/sqrt(eps)) u_i . dW_i + StepCost(i, x_i).
// `states` and `modes` hold steps()+1 entries, `controls` and `noises` hold
// steps() entries (empty control = zero).
std::vector<double> SuIncrements(const CostEvaluator& eval,
                                 std::span<const Vector> states,
                                 std::span<const Vector> controls,
                                 std::span<const Vector> noises,
                                 std::span<const ModeId> modes);

double AccumulateSu(const CostEvaluator& eval, std::span<const Vector> states,
                    std::span<const Vector> controls,
                    std::span<const Vector> noises,
                    std::span<const ModeId> modes);

enum class ExtensionDirection { kForward, kBackward };

// Continues a reference in `target` mode across a transition so that costs and
// feedback always compare same-mode states. Forward: starting at the last
// reference state in `target`, Euler-integrates that mode's deterministic drift
// n_steps ahead, ignoring guards. Backward: starting at the first reference
// state in `target`, integrates the drift in reverse time n_steps back. When the
// reference never visits `target` but a single registered transition leads
// there from the boundary state, the reset of that state is the anchor.
// Returns n_steps + 1 states, anchor first. `t0` is the time of states[0].
std::vector<Vector> ExtendReference(const HybridSystem& system,
                                    std::span<const Vector> states,
                                    std::span<const ModeId> modes,
                                    ModeId target, ExtensionDirection direction,
                                    int n_steps, double t0, double dt);

}  // namespace spipf

#endif  // SPIPF_MEASUREMENT_H_
