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

#include "spipf/hybrid_system.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "spipf/error.h"

namespace spipf {
namespace {

constexpr double kGrazingTolerance = 1e-9;
constexpr double kBisectionTolerance = 1e-10;
constexpr double kBracketStep = 1e-3;

}  // namespace

bool AllFinite(const Vector& v) { return v.allFinite(); }
bool AllFinite(const Matrix& m) { return m.allFinite(); }

Vector ModeDynamics::Drift(double t, const Vector& x, const Vector& u) const {
  Vector f = flow(t, x);
  if (u.size() > 0) {
    if (u.size() != noise_dim) {
      throw Error(ErrorKind::kShape,
                  fmt::format("control has dimension {} but mode '{}' expects {}",
                              u.size(), name, noise_dim));
    }
    f += diffusion(t, x) * u;
  }
  return f;
}

const ModeDynamics& HybridSystem::mode(ModeId id) const {
  if (id.index < 0 || id.index >= num_modes()) {
    throw Error(ErrorKind::kRange, fmt::format("mode {} out of range", id.index));
  }
  return modes[id.index];
}

std::vector<int> HybridSystem::Outgoing(ModeId from) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(transitions.size()); ++i) {
    if (transitions[i].from == from) out.push_back(i);
  }
  return out;
}

const Transition* HybridSystem::Find(ModeId from, ModeId to) const {
  for (const Transition& tr : transitions) {
    if (tr.from == from && tr.to == to) return &tr;
  }
  return nullptr;
}

Vector HybridSystem::Observe(ModeId m, double t, const Vector& x) const {
  Vector y = observations[m.index].h(t, x);
  if (y.size() != obs_dim) {
    throw Error(ErrorKind::kShape,
                fmt::format("observation of mode {} has dimension {}, expected {}",
                            m.index, y.size(), obs_dim));
  }
  return y;
}

Matrix HybridSystem::ObservationJacobian(ModeId m, double t,
                                         const Vector& x) const {
  const ObservationModel& obs = observations[m.index];
  if (obs.jacobian) return obs.jacobian(t, x);
  return FiniteDifferenceJacobian([&](const Vector& z) { return obs.h(t, z); },
                                  x);
}

void HybridSystem::Validate() const {
  if (modes.empty()) throw Error(ErrorKind::kPrecondition, "system has no modes");
  for (const ModeDynamics& m : modes) {
    if (m.state_dim <= 0 || m.noise_dim <= 0 || !m.flow || !m.diffusion) {
      throw Error(ErrorKind::kPrecondition,
                  fmt::format("mode '{}' is incompletely specified", m.name));
    }
  }
  for (const Transition& tr : transitions) {
    if (tr.from.index < 0 || tr.from.index >= num_modes() || tr.to.index < 0 ||
        tr.to.index >= num_modes()) {
      throw Error(ErrorKind::kRange, "transition references an unknown mode");
    }
    if (!tr.guard || !tr.guard_gradient || !tr.reset || !tr.reset_jacobian) {
      throw Error(ErrorKind::kPrecondition, "transition is incompletely specified");
    }
  }
  if (static_cast<int>(observations.size()) != num_modes() ||
      static_cast<int>(obs_noise_sigma.size()) != num_modes()) {
    throw Error(ErrorKind::kShape, "observation models must be given per mode");
  }
  if (obs_dim <= 0) throw Error(ErrorKind::kPrecondition, "obs_dim must be positive");
  for (double s : obs_noise_sigma) {
    if (!(s > 0.0)) throw Error(ErrorKind::kPrecondition, "sigma_B must be positive");
  }
  if (!(noise_scale >= 0.0)) {
    throw Error(ErrorKind::kPrecondition, "noise scale must be non-negative");
  }
}

StepResult Step(const HybridSystem& system, const HybridState& state,
                const Vector& u, double dt, const Vector& dW) {
  const ModeDynamics& mode = system.mode(state.mode);
  if (!(dt > 0.0)) throw Error(ErrorKind::kPrecondition, "dt must be positive");
  if (state.x.size() != mode.state_dim) {
    throw Error(ErrorKind::kShape,
                fmt::format("state has dimension {} but mode '{}' expects {}",
                            state.x.size(), mode.name, mode.state_dim));
  }
  if (dW.size() != mode.noise_dim) {
    throw Error(ErrorKind::kShape,
                fmt::format("noise increment has dimension {}, expected {}",
                            dW.size(), mode.noise_dim));
  }

  const Matrix sigma = mode.diffusion(state.t, state.x);
  Vector rate = mode.flow(state.t, state.x);
  if (u.size() > 0) {
    if (u.size() != mode.noise_dim) {
      throw Error(ErrorKind::kShape, "control dimension mismatch");
    }
    rate.noalias() += sigma * u;
  }
  Vector x_next = state.x + rate * dt;
  x_next.noalias() += sigma * (std::sqrt(system.noise_scale) * dW);
  if (!x_next.allFinite()) {
    throw Error(ErrorKind::kNumericalDivergence,
                fmt::format("non-finite state after step at t={}", state.t));
  }

  const double t_next = state.t + dt;
  int fired = -1;
  for (int i = 0; i < static_cast<int>(system.transitions.size()); ++i) {
    const Transition& tr = system.transitions[i];
    if (tr.from != state.mode) continue;
    if (tr.guard(t_next, x_next) <= 0.0) {
      if (fired >= 0) {
        throw Error(ErrorKind::kMultipleGuards,
                    fmt::format("guards {} and {} both triggered at t={}", fired,
                                i, t_next));
      }
      fired = i;
    }
  }

  StepResult result;
  if (fired < 0) {
    result.state = HybridState{state.mode, std::move(x_next), t_next, state.contact};
    return result;
  }

  const Transition& tr = system.transitions[fired];
  Vector post = tr.reset(t_next, x_next, state.contact);
  if (!post.allFinite()) {
    throw Error(ErrorKind::kNumericalDivergence, "non-finite state after reset");
  }
  const double contact = tr.capture_contact
                             ? tr.capture_contact(t_next, x_next, state.contact)
                             : state.contact;
  result.event = TransitionEvent{fired, tr.from, tr.to, t_next, x_next, post};
  result.state = HybridState{tr.to, std::move(post), t_next, contact};
  return result;
}

Matrix SaltationMatrix(const HybridSystem& system, const Transition& tr,
                       double t, const Vector& x_pre, const Vector& u,
                       double contact) {
  const ModeDynamics& from = system.mode(tr.from);
  const ModeDynamics& to = system.mode(tr.to);

  const Vector f_pre = from.Drift(t, x_pre, u);
  const Vector x_post = tr.reset(t, x_pre, contact);
  const Vector u_to = u.size() == to.noise_dim ? u : Vector();
  const Vector f_post = to.Drift(t, x_post, u_to);

  const GuardGradient dg = tr.guard_gradient(t, x_pre);
  const ResetJacobian dr = tr.reset_jacobian(t, x_pre);
  const double denominator = dg.dt + dg.dx.dot(f_pre);
  if (std::abs(denominator) < kGrazingTolerance) {
    throw Error(ErrorKind::kGrazingContact,
                fmt::format("guard approached tangentially (dg/dt = {:.3e})",
                            denominator));
  }

  Vector numerator = f_post - dr.dx * f_pre;
  if (dr.dt.size() > 0) numerator -= dr.dt;
  return dr.dx + numerator * dg.dx / denominator;
}

Vector IntegrateFlow(const ModeDynamics& mode, double t, const Vector& x,
                     const Vector& u, double duration, double max_substep) {
  if (duration == 0.0) return x;
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(duration) / max_substep)));
  const double h = duration / n;
  Vector z = x;
  double s = t;
  for (int i = 0; i < n; ++i) {
    const Vector k1 = mode.Drift(s, z, u);
    const Vector k2 = mode.Drift(s + 0.5 * h, z + 0.5 * h * k1, u);
    const Vector k3 = mode.Drift(s + 0.5 * h, z + 0.5 * h * k2, u);
    const Vector k4 = mode.Drift(s + h, z + h * k3, u);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s += h;
  }
  return z;
}

Vector PushThroughTransition(const HybridSystem& system, const Transition& tr,
                             double t, const Vector& x, const Vector& u,
                             double contact, double search_horizon,
                             double max_substep) {
  const ModeDynamics& from = system.mode(tr.from);
  const ModeDynamics& to = system.mode(tr.to);

  // Forward if the guard has not been reached yet, backward otherwise.
  const double direction = tr.guard(t, x) > 0.0 ? 1.0 : -1.0;
  auto crossed = [&](double s, const Vector& z) {
    const double g = tr.guard(t + direction * s, z);
    return direction > 0.0 ? g <= 0.0 : g > 0.0;
  };

  double s_lo = 0.0;
  Vector x_lo = x;
  double s_hi = -1.0;
  Vector x_hi;
  for (double s = kBracketStep; s <= search_horizon + 0.5 * kBracketStep;
       s += kBracketStep) {
    Vector z = IntegrateFlow(from, t + direction * s_lo, x_lo, u,
                             direction * (s - s_lo), max_substep);
    if (crossed(s, z)) {
      s_hi = s;
      x_hi = std::move(z);
      break;
    }
    s_lo = s;
    x_lo = std::move(z);
  }
  if (s_hi < 0.0) {
    throw Error(ErrorKind::kOracleInapplicable,
                fmt::format("no guard crossing within {} s", search_horizon));
  }

  const double s_start = s_lo;
  const Vector x_start = x_lo;
  while (s_hi - s_lo > kBisectionTolerance) {
    const double s_mid = 0.5 * (s_lo + s_hi);
    Vector z = IntegrateFlow(from, t + direction * s_start, x_start, u,
                             direction * (s_mid - s_start), max_substep);
    if (crossed(s_mid, z)) {
      s_hi = s_mid;
    } else {
      s_lo = s_mid;
    }
  }
  const double s_hit = direction * 0.5 * (s_lo + s_hi);
  const Vector x_hit = IntegrateFlow(from, t + direction * s_start, x_start, u,
                                     s_hit - direction * s_start, max_substep);
  const Vector x_post = tr.reset(t + s_hit, x_hit, contact);
  const Vector u_to = u.size() == to.noise_dim ? u : Vector();
  return IntegrateFlow(to, t + s_hit, x_post, u_to, -s_hit, max_substep);
}

Matrix SaltationFdOracle(const HybridSystem& system, const Transition& tr,
                         double t, const Vector& x_pre, const Vector& u,
                         double delta, double contact) {
  if (!(delta >= 1e-6 && delta <= 1e-3)) {
    throw Error(ErrorKind::kPrecondition,
                fmt::format("perturbation {} outside [1e-6, 1e-3]", delta));
  }
  const ModeDynamics& from = system.mode(tr.from);
  const GuardGradient dg = tr.guard_gradient(t, x_pre);
  if (std::abs(dg.dt + dg.dx.dot(from.Drift(t, x_pre, u))) < kGrazingTolerance) {
    throw Error(ErrorKind::kGrazingContact, "oracle requires a transversal crossing");
  }

  const int n = static_cast<int>(x_pre.size());
  Matrix result(system.mode(tr.to).state_dim, n);
  for (int i = 0; i < n; ++i) {
    Vector plus = x_pre;
    Vector minus = x_pre;
    plus[i] += delta;
    minus[i] -= delta;
    result.col(i) = (PushThroughTransition(system, tr, t, plus, u, contact) -
                     PushThroughTransition(system, tr, t, minus, u, contact)) /
                    (2.0 * delta);
  }
  return result;
}

Matrix FiniteDifferenceJacobian(const std::function<Vector(const Vector&)>& f,
                                const Vector& x, double rel_step) {
  const int n = static_cast<int>(x.size());
  Matrix jac;
  for (int i = 0; i < n; ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    Vector plus = x;
    Vector minus = x;
    plus[i] += h;
    minus[i] -= h;
    const Vector column = (f(plus) - f(minus)) / (2.0 * h);
    if (i == 0) jac.resize(column.size(), n);
    jac.col(i) = column;
  }
  return jac;
}

FlowJacobians ComputeFlowJacobians(const ModeDynamics& mode, double t,
                                   const Vector& x, const Vector& u) {
  FlowJacobians jac;
  if (mode.drift_jacobian) {
    jac.A = mode.drift_jacobian(t, x, u);
  } else {
    jac.A = FiniteDifferenceJacobian(
        [&](const Vector& z) { return mode.Drift(t, z, u); }, x);
  }
  jac.B = mode.diffusion(t, x);
  if (!jac.A.allFinite() || !jac.B.allFinite()) {
    throw Error(ErrorKind::kNumericalDivergence,
                fmt::format("non-finite flow Jacobian in mode '{}'", mode.name));
  }
  return jac;
}

}  // namespace spipf
