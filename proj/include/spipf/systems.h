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

// Benchmark hybrid systems and ground-truth simulation.

#ifndef SPIPF_SYSTEMS_H_
#define SPIPF_SYSTEMS_H_

#include <vector>

#include "spipf/hybrid_system.h"
#include "spipf/measurement.h"
#include "spipf/rng.h"

namespace spipf {

// Bouncing ball. Mode 0 falls until the height reaches zero, mode 1 rises
// until the velocity reaches zero. State (height, velocity).
inline constexpr ModeId kBallFalling{0};
inline constexpr ModeId kBallRising{1};

struct BouncingBallParams {
  double m = 1.0;
  double g = 9.81;
  double e = 0.9;  // restitution
  double obs_sigma = 0.1;
  double epsilon = 0.1;
};

HybridSystem BouncingBall(const BouncingBallParams& params);

// Spring-loaded inverted pendulum. Flight state (p_x, v_x, p_z, v_z, theta),
// stance state (theta, theta_dot, r, r_dot). Observations are 5-dim; stance
// observes its own state with a trailing zero.
inline constexpr ModeId kSlipFlight{0};
inline constexpr ModeId kSlipStance{1};

struct SlipParams {
  double m = 0.2;
  double k = 10.0;
  double r0 = 1.0;
  double g = 9.81;
  // Coefficient of theta_dot * r_dot in the stance angular acceleration. The
  // classical point-mass SLIP has 2.
  double coriolis = 3.0;
  double obs_sigma = 0.1;
  double epsilon = 0.01;
};

HybridSystem Slip(const SlipParams& params);

// Guardless scalar diffusion dx = a x dt + s (u dt + sqrt(eps) dW), h(x) = x.
struct LinearScalarParams {
  double a = -0.5;
  double s = 1.0;
  double obs_sigma = 0.1;
  double epsilon = 0.1;
};

HybridSystem LinearScalar(const LinearScalarParams& params);

struct TransitionRecord {
  int step = 0;  // reset applied at the end of this step
  ModeId from;
  ModeId to;
};

struct TruthRun {
  std::vector<HybridState> states;  // L+1
  std::vector<TransitionRecord> transitions;
  MeasurementPath measurements;
};

// Uncontrolled noisy rollout of round(horizon / dt) steps plus measurements.
// Process noise is drawn from `process`, measurement noise from `measurement`.
// Divergence is reported as kSimulation.
TruthRun SimulateTruth(const HybridSystem& system, const HybridState& x0,
                       double horizon, double dt, Rng& process,
                       Rng& measurement);

}  // namespace spipf

#endif  // SPIPF_SYSTEMS_H_
