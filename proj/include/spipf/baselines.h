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

// Reference estimators: salted Kalman filter, bootstrap multi-mode SIR, and
// the zero-control ablation of the path integral filter.

#ifndef SPIPF_BASELINES_H_
#define SPIPF_BASELINES_H_

#include "spipf/hybrid_system.h"
#include "spipf/measurement.h"
#include "spipf/particle_filter.h"

namespace spipf {

struct GaussianBelief {
  Vector mean;
  Matrix cov;
  ModeId mode;
  double t = 0.0;
  double contact = 0.0;

  // Symmetrizes and clamps tiny negative eigenvalues; throws
  // kNumericalDivergence if the covariance is materially indefinite.
  void Condition();
};

// EKF update against the rate observation dY / dt with covariance
// sigma_B^2 / dt, in Joseph form.
GaussianBelief SkfUpdate(const HybridSystem& system, const GaussianBelief& b,
                         const Vector& dY, double dt);

// Euler predict of the mean with P' = Ad P Ad^T + eps sigma sigma^T dt. When
// the predicted mean crosses a guard the mean is reset and the covariance
// mapped as Xi P' Xi^T.
GaussianBelief SkfPredict(const HybridSystem& system, const GaussianBelief& b,
                          double dt);

// Update with increment dY (covering [t, t + dt]) at the current belief, then
// predict to t + dt.
GaussianBelief SkfStep(const HybridSystem& system, const GaussianBelief& b,
                       const Vector& dY, double dt);

// Gaussian of the most probable prior mode.
GaussianBelief PriorBelief(const PriorSpec& prior, double t0);

RunResult RunSkf(const HybridSystem& system, const MeasurementPath& path,
                 const GaussianBelief& init);

// Bootstrap SIR: uncontrolled noisy propagation, likelihood weights from the
// same per-step cost, multinomial resampling whenever gamma < gamma_thres. It
// resamples regardless of config.resampling_enabled, which only governs the
// path integral filter.
RunResult RunSir(const HybridSystem& system, const MeasurementPath& path,
                 const FilterConfig& config);

RunResult RunSpipfZeroControl(const HybridSystem& system,
                              const MeasurementPath& path,
                              const FilterConfig& config);

}  // namespace spipf

#endif  // SPIPF_BASELINES_H_
