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

// Sliding-window iLQR on the measurement-driven path cost. Value-function
// derivatives cross nominal transitions through the saltation matrix.

#ifndef SPIPF_ILQR_H_
#define SPIPF_ILQR_H_

#include <functional>
#include <string>
#include <vector>

#include "spipf/error.h"
#include "spipf/hybrid_system.h"
#include "spipf/measurement.h"
#include "spipf/rng.h"

namespace spipf {

// Step n of the window runs from times[n] to times[n+1]. ref_* hold N+1
// entries (the nominal); k_ff, K_fb hold N. The policy at step n is
//   u = k_ff[n] + K_fb[n] (x - ref_states[n]).
struct GainSchedule {
  std::vector<double> times;
  std::vector<Vector> k_ff;
  std::vector<Matrix> K_fb;
  std::vector<Vector> ref_states;
  std::vector<ModeId> ref_modes;
  std::vector<double> ref_contact;
  // Steps n whose nominal crosses a guard (the reset is applied at n+1).
  std::vector<int> transition_steps;
  // Value gradient V_x along the nominal, N+1 entries (zero at the end).
  std::vector<Vector> value_x;
  double cost = 0.0;
  int iterations = 0;
  // Set for the zero-control ablation: rollouts skip reference lookups.
  bool zero_control = false;

  int steps() const { return static_cast<int>(k_ff.size()); }
};

struct ILQRSettings {
  int max_iters = 30;
  double cost_tol = 1e-6;
  double reg_init = 1e-6;
  double reg_max = 1e6;
  std::vector<double> line_search_alphas = DefaultAlphas();
  // Optional per-iteration diagnostic sink (one plain-text line per call).
  std::function<void(const std::string&)> log;

  // Ten geometric steps from 1 down to 1e-3.
  static std::vector<double> DefaultAlphas();
  void Validate() const;
};

// Raised when regularization exceeds reg_max. Carries the best schedule found
// so callers can continue with it.
class SolverStalled : public Error {
 public:
  SolverStalled(const std::string& message, GainSchedule best)
      : Error(ErrorKind::kSolverStalled, message), best_(std::move(best)) {}
  const GainSchedule& best() const { return best_; }

 private:
  GainSchedule best_;
};

GainSchedule SolveWindow(const HybridSystem& system, const CostEvaluator& eval,
                         const HybridState& init_state,
                         const ILQRSettings& settings = {});

// Schedule whose rollouts are uncontrolled. The nominal is the deterministic
// zero-control flow from init_state.
GainSchedule ZeroSchedule(const HybridSystem& system, const CostEvaluator& eval,
                          const HybridState& init_state);

enum class ReferenceSource {
  kNominal,            // reference is in the particle's mode at this step
  kForwardExtension,   // nominal already left the mode
  kBackwardExtension,  // nominal has not reached the mode yet
  kResetMapped,        // nominal never visits the mode; reset of ref_n
};

// Per-mode, per-step reference used for feedback so that the state error is
// always taken between same-mode states.
class ReferenceTable {
 public:
  struct Entry {
    Vector ref;
    // Step whose gains apply; -1 means zero control.
    int gain_step = -1;
    ReferenceSource source = ReferenceSource::kNominal;
  };

  ReferenceTable(const HybridSystem& system, const GainSchedule& gains);

  // Throws kModeMismatch when `mode` has no usable reference at step n.
  const Entry& Lookup(ModeId mode, int n) const;

 private:
  void BuildMode(const HybridSystem& system, const GainSchedule& gains, ModeId m);

  std::vector<std::vector<Entry>> entries_;  // [mode][step]
  std::vector<bool> available_;
  std::vector<std::string> missing_reason_;
};

struct Rollout {
  std::vector<Vector> states;  // N+1
  std::vector<ModeId> modes;   // N+1
  std::vector<double> contact; // N+1
  std::vector<Vector> controls;  // N, sized to the mode at each step
  std::vector<Vector> noises;    // N, raw Wiener increments
  std::vector<ReferenceSource> sources;  // N
  std::vector<TransitionEvent> events;
  std::vector<int> event_steps;
};

// u_n = k_ff + K_fb (x_n - ref) with the reference read from `table` for the
// particle's current mode. `rng` may be null for a noiseless rollout. The
// rollout covers steps [start_step, N) and x0.t must be times[start_step].
// Throws kNumericalDivergence / kMultipleGuards from the underlying step.
Rollout RolloutControlled(const HybridSystem& system, const GainSchedule& gains,
                          const ReferenceTable& table, const HybridState& x0,
                          Rng* rng, int start_step = 0);

// Deterministic rollout cost: sum of (dt/2eps)|u|^2 + StepCost over the
// steps the rollout covers, starting at window step `start_step`.
double NominalCost(const CostEvaluator& eval, const Rollout& r,
                   int start_step = 0);

}  // namespace spipf

#endif  // SPIPF_ILQR_H_
