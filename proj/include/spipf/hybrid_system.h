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

// Stochastic hybrid systems: per-mode controlled diffusions
//
//   dX = F_j(t, X) dt + sigma_j(t, X) (u dt + sqrt(eps) dW),
//
// scalar guards g_jk(t, X) <= 0 that trigger a reset X+ = R_jk(t, X-), and the
// saltation matrix that linearizes a transition including the shift of the
// impact time. Everything here is pure; randomness enters only through the
// caller-supplied Wiener increments.

#ifndef SPIPF_HYBRID_SYSTEM_H_
#define SPIPF_HYBRID_SYSTEM_H_

#include <compare>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spipf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct ModeId {
  int index = 0;

  constexpr ModeId() = default;
  constexpr explicit ModeId(int i) : index(i) {}
  friend constexpr auto operator<=>(ModeId, ModeId) = default;
};

struct ModeDynamics {
  std::string name;
  int state_dim = 0;
  int noise_dim = 0;
  // Uncontrolled flow F_j(t, x).
  std::function<Vector(double, const Vector&)> flow;
  // sigma_j(t, x), state_dim x noise_dim. Controls enter through the same
  // channel, so the control dimension equals noise_dim.
  std::function<Matrix(double, const Vector&)> diffusion;
  // Optional analytic d/dx [F_j + sigma_j u]. Central differences otherwise.
  std::function<Matrix(double, const Vector&, const Vector&)> drift_jacobian;

  // Controlled drift F_j(t, x) + sigma_j(t, x) u. An empty `u` means zero
  // control.
  Vector Drift(double t, const Vector& x, const Vector& u) const;
};

struct GuardGradient {
  double dt = 0.0;
  RowVector dx;
};

struct ResetJacobian {
  Vector dt;
  Matrix dx;
};

struct Transition {
  ModeId from;
  ModeId to;
  std::function<double(double, const Vector&)> guard;
  std::function<GuardGradient(double, const Vector&)> guard_gradient;
  // R_jk(t, x). `contact` is the metadata carried by the pre-transition state
  // (SLIP reads the toe position from it on liftoff).
  std::function<Vector(double, const Vector&, double)> reset;
  std::function<ResetJacobian(double, const Vector&)> reset_jacobian;
  // Optional: metadata to store on the post-transition state. When empty the
  // previous value is carried over.
  std::function<double(double, const Vector&, double)> capture_contact;
};

struct ObservationModel {
  std::function<Vector(double, const Vector&)> h;
  // Optional analytic dh/dx.
  std::function<Matrix(double, const Vector&)> jacobian;
};

struct HybridSystem {
  std::vector<ModeDynamics> modes;
  std::vector<Transition> transitions;
  // One observation model per mode, all with output dimension obs_dim.
  std::vector<ObservationModel> observations;
  std::vector<double> obs_noise_sigma;
  int obs_dim = 0;
  double noise_scale = 1.0;

  int num_modes() const { return static_cast<int>(modes.size()); }
  const ModeDynamics& mode(ModeId id) const;
  // Indices into `transitions` of every transition leaving `from`.
  std::vector<int> Outgoing(ModeId from) const;
  const Transition* Find(ModeId from, ModeId to) const;

  Vector Observe(ModeId m, double t, const Vector& x) const;
  Matrix ObservationJacobian(ModeId m, double t, const Vector& x) const;

  // Throws kShape/kPrecondition when dimensions or references are
  // inconsistent.
  void Validate() const;
};

struct HybridState {
  ModeId mode;
  Vector x;
  double t = 0.0;
  double contact = 0.0;
};

struct TransitionEvent {
  int transition = -1;
  ModeId from;
  ModeId to;
  double t = 0.0;
  Vector pre;   // flowed state that hit the guard
  Vector post;  // after the reset
};

struct StepResult {
  HybridState state;
  std::optional<TransitionEvent> event;
};

// One Euler-Maruyama step followed by guard detection at the step end:
//   x' = x + (F + sigma u) dt + sigma sqrt(eps) dW.
// `dW` is the raw Wiener increment (variance dt). If exactly one outgoing guard
// is <= 0 at (t + dt, x') the reset is applied at t + dt.
StepResult Step(const HybridSystem& system, const HybridState& state,
                const Vector& u, double dt, const Vector& dW);

// Xi = DxR + (F_k(x+) - DxR F_j(x-) - dtR) dxg / (dtg + dxg F_j(x-)).
// Flows are evaluated with control `u` (sized for the source mode; the
// destination flow uses zero control when the dimensions differ).
Matrix SaltationMatrix(const HybridSystem& system, const Transition& tr,
                       double t, const Vector& x_pre, const Vector& u,
                       double contact = 0.0);

// Maps a state near the guard of `tr` to the post-transition state at the
// same nominal time: flows (forwards or backwards) under the source mode until
// the guard crossing, located by bisection to 1e-10 s, applies the reset and
// flows the destination mode back by the same time shift. Throws
// kOracleInapplicable if no crossing is found within `search_horizon`.
Vector PushThroughTransition(const HybridSystem& system, const Transition& tr,
                             double t, const Vector& x, const Vector& u,
                             double contact = 0.0,
                             double search_horizon = 1.0,
                             double max_substep = 1e-4);

// Central-difference saltation estimate built from PushThroughTransition.
// `delta` must lie in [1e-6, 1e-3].
Matrix SaltationFdOracle(const HybridSystem& system, const Transition& tr,
                         double t, const Vector& x_pre, const Vector& u,
                         double delta, double contact = 0.0);

struct FlowJacobians {
  Matrix A;  // d(F + sigma u)/dx
  Matrix B;  // sigma
};

FlowJacobians ComputeFlowJacobians(const ModeDynamics& mode, double t,
                                   const Vector& x, const Vector& u);

// Central finite-difference Jacobian of f at x with step
// rel_step * max(1, |x_i|).
Matrix FiniteDifferenceJacobian(
    const std::function<Vector(const Vector&)>& f, const Vector& x,
    double rel_step = 1e-6);

// Deterministic RK4 integration of the controlled drift over `duration`
// (which may be negative) with substeps no longer than `max_substep`.
Vector IntegrateFlow(const ModeDynamics& mode, double t, const Vector& x,
                     const Vector& u, double duration,
                     double max_substep = 1e-4);

bool AllFinite(const Vector& v);
bool AllFinite(const Matrix& m);

}  // namespace spipf

#endif  // SPIPF_HYBRID_SYSTEM_H_
