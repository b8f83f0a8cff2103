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

#include "spipf/systems.h"

#include <cmath>

#include <fmt/format.h>

#include "spipf/error.h"

namespace spipf {
namespace {

constexpr double kMinLegLength = 1e-6;

ObservationModel IdentityObservation(int dim) {
  ObservationModel obs;
  obs.h = [](double, const Vector& x) { return x; };
  obs.jacobian = [dim](double, const Vector&) {
    return Matrix::Identity(dim, dim).eval();
  };
  return obs;
}

void CheckPositive(double v, const char* name) {
  if (!(v > 0.0)) {
    throw Error(ErrorKind::kPrecondition, fmt::format("{} must be positive", name));
  }
}

}  // namespace

HybridSystem BouncingBall(const BouncingBallParams& p) {
  CheckPositive(p.m, "m");
  CheckPositive(p.g, "g");
  CheckPositive(p.obs_sigma, "obs_sigma");
  if (!(p.e > 0.0 && p.e <= 1.0)) {
    throw Error(ErrorKind::kPrecondition, "restitution must lie in (0, 1]");
  }

  ModeDynamics mode;
  mode.state_dim = 2;
  mode.noise_dim = 1;
  const double g = p.g;
  const double inv_m = 1.0 / p.m;
  mode.flow = [g](double, const Vector& x) {
    Vector f(2);
    f << x[1], -g;
    return f;
  };
  mode.diffusion = [inv_m](double, const Vector&) {
    Matrix s(2, 1);
    s << 0.0, inv_m;
    return s;
  };
  mode.drift_jacobian = [](double, const Vector&, const Vector&) {
    Matrix a(2, 2);
    a << 0.0, 1.0, 0.0, 0.0;
    return a;
  };

  HybridSystem sys;
  mode.name = "falling";
  sys.modes.push_back(mode);
  mode.name = "rising";
  sys.modes.push_back(mode);

  Transition impact;
  impact.from = kBallFalling;
  impact.to = kBallRising;
  impact.guard = [](double, const Vector& x) { return x[0]; };
  impact.guard_gradient = [](double, const Vector&) {
    return GuardGradient{0.0, (RowVector(2) << 1.0, 0.0).finished()};
  };
  const double e = p.e;
  impact.reset = [e](double, const Vector& x, double) {
    Vector y(2);
    y << x[0], -e * x[1];
    return y;
  };
  impact.reset_jacobian = [e](double, const Vector&) {
    Matrix d(2, 2);
    d << 1.0, 0.0, 0.0, -e;
    return ResetJacobian{Vector(), d};
  };
  sys.transitions.push_back(impact);

  Transition apex;
  apex.from = kBallRising;
  apex.to = kBallFalling;
  apex.guard = [](double, const Vector& x) { return x[1]; };
  apex.guard_gradient = [](double, const Vector&) {
    return GuardGradient{0.0, (RowVector(2) << 0.0, 1.0).finished()};
  };
  apex.reset = [](double, const Vector& x, double) { return x; };
  apex.reset_jacobian = [](double, const Vector&) {
    return ResetJacobian{Vector(), Matrix::Identity(2, 2)};
  };
  sys.transitions.push_back(apex);

  sys.observations = {IdentityObservation(2), IdentityObservation(2)};
  sys.obs_noise_sigma = {p.obs_sigma, p.obs_sigma};
  sys.obs_dim = 2;
  sys.noise_scale = p.epsilon;
  sys.Validate();
  return sys;
}

HybridSystem Slip(const SlipParams& p) {
  CheckPositive(p.m, "m");
  CheckPositive(p.k, "k");
  CheckPositive(p.r0, "r0");
  CheckPositive(p.g, "g");
  CheckPositive(p.obs_sigma, "obs_sigma");
  const double m = p.m, k = p.k, r0 = p.r0, g = p.g, c = p.coriolis;

  HybridSystem sys;

  ModeDynamics flight;
  flight.name = "flight";
  flight.state_dim = 5;
  flight.noise_dim = 3;
  flight.flow = [g](double, const Vector& x) {
    Vector f(5);
    f << x[1], 0.0, x[3], -g, 0.0;
    return f;
  };
  flight.diffusion = [](double, const Vector&) {
    Matrix s = Matrix::Zero(5, 3);
    s(1, 0) = 1.0;
    s(3, 1) = 1.0;
    s(4, 2) = 1.0;
    return s;
  };
  flight.drift_jacobian = [](double, const Vector&, const Vector&) {
    Matrix a = Matrix::Zero(5, 5);
    a(0, 1) = 1.0;
    a(2, 3) = 1.0;
    return a;
  };
  sys.modes.push_back(flight);

  ModeDynamics stance;
  stance.name = "stance";
  stance.state_dim = 4;
  stance.noise_dim = 2;
  auto check_leg = [](double r) {
    if (!(r > kMinLegLength)) {
      throw Error(ErrorKind::kSingularConfiguration,
                  fmt::format("stance leg length {} is degenerate", r));
    }
  };
  stance.flow = [=](double, const Vector& x) {
    const double th = x[0], thd = x[1], r = x[2], rd = x[3];
    check_leg(r);
    Vector f(4);
    f << thd, (-c * thd * rd - g * std::cos(th)) / r, rd,
        k * (r0 - r) / m - g * std::sin(th) + thd * thd * r;
    return f;
  };
  stance.diffusion = [=](double, const Vector& x) {
    check_leg(x[2]);
    Matrix s = Matrix::Zero(4, 2);
    s(2, 0) = m / (x[2] * x[2]);
    s(3, 1) = k / m;
    return s;
  };
  stance.drift_jacobian = [=](double, const Vector& x, const Vector& u) {
    const double th = x[0], thd = x[1], r = x[2], rd = x[3];
    check_leg(r);
    const double u1 = u.size() > 0 ? u[0] : 0.0;
    Matrix a = Matrix::Zero(4, 4);
    a(0, 1) = 1.0;
    a(1, 0) = g * std::sin(th) / r;
    a(1, 1) = -c * rd / r;
    a(1, 2) = (c * thd * rd + g * std::cos(th)) / (r * r);
    a(1, 3) = -c * thd / r;
    a(2, 2) = -2.0 * m * u1 / (r * r * r);
    a(2, 3) = 1.0;
    a(3, 0) = -g * std::cos(th);
    a(3, 1) = 2.0 * thd * r;
    a(3, 2) = -k / m + thd * thd;
    return a;
  };
  sys.modes.push_back(stance);

  Transition touchdown;
  touchdown.from = kSlipFlight;
  touchdown.to = kSlipStance;
  touchdown.guard = [r0](double, const Vector& x) {
    return x[2] - r0 * std::sin(x[4]);
  };
  touchdown.guard_gradient = [r0](double, const Vector& x) {
    RowVector d = RowVector::Zero(5);
    d[2] = 1.0;
    d[4] = -r0 * std::cos(x[4]);
    return GuardGradient{0.0, d};
  };
  const double r0_sq = r0 * r0;
  touchdown.reset = [=](double, const Vector& x, double) {
    const double px = x[0], vx = x[1], pz = x[2], vz = x[3], th = x[4];
    Vector y(4);
    y << th, (px * vz - pz * vx) / r0_sq, r0,
        -vx * std::cos(th) + vz * std::sin(th);
    return y;
  };
  touchdown.reset_jacobian = [=](double, const Vector& x) {
    const double px = x[0], vx = x[1], pz = x[2], vz = x[3], th = x[4];
    Matrix d = Matrix::Zero(4, 5);
    d(0, 4) = 1.0;
    d(1, 0) = vz / r0_sq;
    d(1, 1) = -pz / r0_sq;
    d(1, 2) = -vx / r0_sq;
    d(1, 3) = px / r0_sq;
    d(3, 1) = -std::cos(th);
    d(3, 3) = std::sin(th);
    d(3, 4) = vx * std::sin(th) + vz * std::cos(th);
    return ResetJacobian{Vector(), d};
  };
  // Toe position, read back at liftoff.
  touchdown.capture_contact = [r0](double, const Vector& x, double) {
    return x[0] - r0 * std::cos(x[4]);
  };
  sys.transitions.push_back(touchdown);

  Transition liftoff;
  liftoff.from = kSlipStance;
  liftoff.to = kSlipFlight;
  liftoff.guard = [r0](double, const Vector& x) { return r0 - x[2]; };
  liftoff.guard_gradient = [](double, const Vector&) {
    RowVector d = RowVector::Zero(4);
    d[2] = -1.0;
    return GuardGradient{0.0, d};
  };
  liftoff.reset = [r0](double, const Vector& x, double toe) {
    const double th = x[0], thd = x[1], r = x[2], rd = x[3];
    Vector y(5);
    y << toe + r0 * std::cos(th), rd * std::cos(th) - r * thd * std::sin(th),
        r0 * std::sin(th), r0 * thd * std::cos(th) + rd * std::sin(th), th;
    return y;
  };
  liftoff.reset_jacobian = [r0](double, const Vector& x) {
    const double th = x[0], thd = x[1], r = x[2], rd = x[3];
    const double s = std::sin(th), co = std::cos(th);
    Matrix d = Matrix::Zero(5, 4);
    d(0, 0) = -r0 * s;
    d(1, 0) = -rd * s - r * thd * co;
    d(1, 1) = -r * s;
    d(1, 2) = -thd * s;
    d(1, 3) = co;
    d(2, 0) = r0 * co;
    d(3, 0) = -r0 * thd * s + rd * co;
    d(3, 1) = r0 * co;
    d(3, 3) = s;
    d(4, 0) = 1.0;
    return ResetJacobian{Vector(), d};
  };
  sys.transitions.push_back(liftoff);

  ObservationModel stance_obs;
  stance_obs.h = [](double, const Vector& x) {
    Vector y = Vector::Zero(5);
    y.head(4) = x;
    return y;
  };
  stance_obs.jacobian = [](double, const Vector&) {
    Matrix j = Matrix::Zero(5, 4);
    j.topRows(4).setIdentity();
    return j;
  };
  sys.observations = {IdentityObservation(5), stance_obs};
  sys.obs_noise_sigma = {p.obs_sigma, p.obs_sigma};
  sys.obs_dim = 5;
  sys.noise_scale = p.epsilon;
  sys.Validate();
  return sys;
}

HybridSystem LinearScalar(const LinearScalarParams& p) {
  CheckPositive(p.obs_sigma, "obs_sigma");
  ModeDynamics mode;
  mode.name = "linear";
  mode.state_dim = 1;
  mode.noise_dim = 1;
  const double a = p.a, s = p.s;
  mode.flow = [a](double, const Vector& x) { return (a * x).eval(); };
  mode.diffusion = [s](double, const Vector&) { return Matrix::Constant(1, 1, s); };
  mode.drift_jacobian = [a](double, const Vector&, const Vector&) {
    return Matrix::Constant(1, 1, a);
  };
  HybridSystem sys;
  sys.modes.push_back(mode);
  sys.observations = {IdentityObservation(1)};
  sys.obs_noise_sigma = {p.obs_sigma};
  sys.obs_dim = 1;
  sys.noise_scale = p.epsilon;
  sys.Validate();
  return sys;
}

TruthRun SimulateTruth(const HybridSystem& system, const HybridState& x0,
                       double horizon, double dt, Rng& process,
                       Rng& measurement) {
  if (!(dt > 0.0) || !(horizon > 0.0)) {
    throw Error(ErrorKind::kPrecondition, "horizon and dt must be positive");
  }
  const int steps = static_cast<int>(std::lround(horizon / dt));
  TruthRun run;
  run.states.reserve(steps + 1);
  run.states.push_back(x0);
  const bool noisy = system.noise_scale > 0.0;
  try {
    for (int i = 0; i < steps; ++i) {
      const HybridState& s = run.states.back();
      const ModeDynamics& mode = system.mode(s.mode);
      const Vector dw = noisy ? process.NormalVector(mode.noise_dim, std::sqrt(dt))
                              : Vector::Zero(mode.noise_dim);
      StepResult r = Step(system, s, Vector(), dt, dw);
      // Keep the grid exact rather than accumulating dt.
      r.state.t = x0.t + (i + 1) * dt;
      if (r.event) run.transitions.push_back({i, r.event->from, r.event->to});
      run.states.push_back(std::move(r.state));
    }
  } catch (const Error& e) {
    throw Error(ErrorKind::kSimulation,
                fmt::format("truth simulation failed after {} steps: {}",
                            run.states.size() - 1, e.what()));
  }
  run.measurements = GenerateMeasurements(system, run.states, measurement);
  return run;
}

}  // namespace spipf
