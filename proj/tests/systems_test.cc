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
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "spipf/config.h"
#include "spipf/error.h"
#include "spipf/harness.h"
#include "spipf/rng.h"
#include "test_util.h"

namespace spipf {
namespace {

using testing::KindOf;
using testing::MaxAbs;
using testing::Vec;

constexpr double kPi = std::numbers::pi;

// Noiseless truth from `x` over `horizon`.
TruthRun Noiseless(HybridSystem sys, ModeId mode, const Vector& x, double horizon,
                   double dt, std::uint64_t seed = 1) {
  sys.noise_scale = 0.0;
  Rng process(seed, StreamTag::kTruthProcess), meas(seed, StreamTag::kMeasurement);
  return SimulateTruth(sys, {mode, x, 0.0, 0.0}, horizon, dt, process, meas);
}

double BallEnergy(const Vector& x, double g) { return 0.5 * x[1] * x[1] + g * x[0]; }

Matrix FdJacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

TEST_CASE("ball: impact reset Jacobian is diag(1, -e)") {
  BouncingBallParams p;
  p.e = 0.7;
  const HybridSystem ball = BouncingBall(p);
  const Transition& impact = *ball.Find(kBallFalling, kBallRising);
  Matrix expected(2, 2);
  expected << 1.0, 0.0, 0.0, -0.7;
  CHECK(MaxAbs(impact.reset_jacobian(0.0, Vec({0.0, -3.0})).dx - expected) == 0.0);
  CHECK((impact.reset(0.0, Vec({0.0, -3.0}), 0.0) - Vec({0.0, 2.1})).norm() < 1e-15);
  const Transition& apex = *ball.Find(kBallRising, kBallFalling);
  CHECK(apex.reset(0.0, Vec({0.4, 0.0}), 0.0) == Vec({0.4, 0.0}));
  CHECK(MaxAbs(apex.reset_jacobian(0.0, Vec({0.4, 0.0})).dx - Matrix::Identity(2, 2)) == 0.0);
}

TEST_CASE("ball: elastic drop conserves speed and returns to its height") {
  BouncingBallParams p;
  p.e = 1.0;
  const double h0 = 1.0, dt = 1e-4;
  const TruthRun run = Noiseless(BouncingBall(p), kBallFalling, Vec({h0, 0.0}), 0.95, dt);
  REQUIRE(run.transitions.size() == 2);
  const TransitionRecord& impact = run.transitions[0];
  CHECK(impact.from == kBallFalling);
  const Vector& pre = run.states[impact.step].x;
  const Vector& post = run.states[impact.step + 1].x;
  const double v_impact = std::sqrt(2.0 * p.g * h0);
  CHECK(std::abs(std::abs(pre[1]) - v_impact) < 2.0 * p.g * dt);
  // Equal and opposite up to one Euler step of gravity.
  CHECK(std::abs(post[1] + (pre[1] - p.g * dt)) < 1e-12);
  // Apex height.
  const TransitionRecord& apex = run.transitions[1];
  CHECK(apex.from == kBallRising);
  CHECK(std::abs(run.states[apex.step + 1].x[0] - h0) < 1e-2);
}

TEST_CASE("ball: noiseless fall follows the ballistic closed form") {
  BouncingBallParams p;
  const double dt = 1e-4;
  const TruthRun run = Noiseless(BouncingBall(p), kBallFalling, Vec({1.0, 0.0}), 0.4, dt);
  CHECK(run.transitions.empty());
  for (std::size_t n = 0; n < run.states.size(); n += 100) {
    const double t = n * dt;
    CHECK(std::abs(run.states[n].x[0] - (1.0 - 0.5 * p.g * t * t)) <= p.g * t * dt);
    CHECK(std::abs(run.states[n].x[1] + p.g * t) < 1e-10);
  }
}

TEST_CASE("ball: energy is non-increasing across impacts") {
  BouncingBallParams p;
  const double dt = 1e-3;
  const TruthRun run = Noiseless(BouncingBall(p), kBallFalling, Vec({1.0, 0.0}), 3.0, dt);
  int impacts = 0;
  std::vector<bool> impact_step(run.states.size(), false);
  for (const TransitionRecord& tr : run.transitions) {
    if (tr.from == kBallFalling) {
      impact_step[tr.step] = true;
      ++impacts;
    }
  }
  CHECK(impacts >= 3);
  // Euler adds exactly g^2 dt^2 / 2 per step between impacts.
  const double drift = 0.5 * p.g * p.g * dt * dt;
  for (std::size_t n = 0; n + 1 < run.states.size(); ++n) {
    const double e0 = BallEnergy(run.states[n].x, p.g);
    const double e1 = BallEnergy(run.states[n + 1].x, p.g);
    if (impact_step[n]) {
      CHECK(e1 < e0);
    } else {
      CHECK(std::abs(e1 - e0 - drift) < 1e-9);
    }
  }
}

TEST_CASE("slip: vertical touchdown and liftoff hand examples") {
  SlipParams sp;
  const HybridSystem slip = Slip(sp);
  const Transition& td = *slip.Find(kSlipFlight, kSlipStance);
  const Transition& lo = *slip.Find(kSlipStance, kSlipFlight);
  const double v = 1.3;
  const Vector stance = td.reset(0.0, Vec({0.0, 0.0, sp.r0, -v, kPi / 2}), 0.0);
  REQUIRE(stance.size() == 4);
  CHECK(stance[0] == doctest::Approx(kPi / 2));
  CHECK(std::abs(stance[1]) < 1e-15);
  CHECK(stance[2] == sp.r0);
  CHECK(stance[3] == doctest::Approx(-v));

  const double toe = 0.37;
  const Vector flight = lo.reset(0.0, Vec({kPi / 2, 0.0, sp.r0, v}), toe);
  REQUIRE(flight.size() == 5);
  CHECK(flight[0] == doctest::Approx(toe));
  CHECK(std::abs(flight[1]) < 1e-15);
  CHECK(flight[2] == doctest::Approx(sp.r0));
  CHECK(flight[3] == doctest::Approx(v));
  CHECK(flight[4] == doctest::Approx(kPi / 2));
}

TEST_CASE("slip: touchdown composed with liftoff recovers the velocities") {
  SlipParams sp;
  const HybridSystem slip = Slip(sp);
  const Transition& td = *slip.Find(kSlipFlight, kSlipStance);
  const Transition& lo = *slip.Find(kSlipStance, kSlipFlight);
  const Vector x = Vec({0.0, 0.4, sp.r0, -1.1, kPi / 2});
  const double toe = td.capture_contact(0.0, x, 0.0);
  const Vector back = lo.reset(0.0, td.reset(0.0, x, 0.0), toe);
  REQUIRE(back.size() == 5);
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("slip: reset Jacobians agree with finite differences") {
  SlipParams sp;
  const HybridSystem slip = Slip(sp);
  const Transition& td = *slip.Find(kSlipFlight, kSlipStance);
  const Transition& lo = *slip.Find(kSlipStance, kSlipFlight);
  Rng rng(11, StreamTag::kTrial);
  for (int i = 0; i < 20; ++i) {
    const double th = 1.1 + 0.9 * rng.Uniform();
    const Vector x = Vec({0.5 * rng.Normal(), 0.5 + 0.5 * rng.Normal(), sp.r0 * std::sin(th),
                          -0.5 - rng.Uniform(), th});
    const Matrix fd =
        FdJacobian([&](const Vector& y) { return td.reset(0.0, y, 0.0); }, x, 1e-6);
    const Matrix an = td.reset_jacobian(0.0, x).dx;
    CHECK(MaxAbs(an - fd) < 1e-4 * std::max(1.0, MaxAbs(fd)));

    const Vector s = Vec({th, rng.Normal(), sp.r0, 0.5 + rng.Uniform()});
    const Matrix fd_lo =
        FdJacobian([&](const Vector& y) { return lo.reset(0.0, y, 0.2); }, s, 1e-6);
    CHECK(MaxAbs(lo.reset_jacobian(0.0, s).dx - fd_lo) < 1e-4 * std::max(1.0, MaxAbs(fd_lo)));
  }
}

TEST_CASE("guards are positive in their source domain and negative past the surface") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  SlipParams sp;
  const HybridSystem slip = Slip(sp);
  const Transition& impact = *ball.Find(kBallFalling, kBallRising);
  const Transition& apex = *ball.Find(kBallRising, kBallFalling);
  const Transition& td = *slip.Find(kSlipFlight, kSlipStance);
  const Transition& lo = *slip.Find(kSlipStance, kSlipFlight);
  Rng rng(12, StreamTag::kTrial);
  for (int i = 0; i < 50; ++i) {
    const double a = 0.01 + rng.Uniform(), b = 2.0 * rng.Normal();
    CHECK(impact.guard(0.0, Vec({a, b})) > 0.0);
    CHECK(impact.guard(0.0, Vec({-a, b})) < 0.0);
    CHECK(apex.guard(0.0, Vec({b, a})) > 0.0);
    CHECK(apex.guard(0.0, Vec({b, -a})) < 0.0);

    const double th = 1.0 + rng.Uniform();
    const double h = 0.01 + 0.5 * rng.Uniform();
    CHECK(td.guard(0.0, Vec({b, b, sp.r0 * std::sin(th) + h, b, th})) > 0.0);
    CHECK(td.guard(0.0, Vec({b, b, sp.r0 * std::sin(th) - h, b, th})) < 0.0);
    CHECK(lo.guard(0.0, Vec({th, b, sp.r0 - 0.5 * h, b})) > 0.0);
    CHECK(lo.guard(0.0, Vec({th, b, sp.r0 + h, b})) < 0.0);
  }
}

TEST_CASE("slip: coriolis coefficient switches the stance angular term") {
  SlipParams sp;
  const Vector x = Vec({1.3, 0.7, 0.9, -0.4});
  const double gravity = -sp.g * std::cos(x[0]);
  for (double c : {3.0, 2.0}) {
    sp.coriolis = c;
    const Vector f = Slip(sp).mode(kSlipStance).flow(0.0, x);
    CHECK(f[1] == doctest::Approx((-c * x[1] * x[3] + gravity) / x[2]));
  }
}

TEST_CASE("slip: degenerate leg length is a singular configuration") {
  const HybridSystem slip = Slip(SlipParams{});
  CHECK(KindOf([&] { slip.mode(kSlipStance).flow(0.0, Vec({1.0, 0.0, 0.0, 0.0})); }) ==
        ErrorKind::kSingularConfiguration);
}

TEST_CASE("simulate truth: noiseless ball impacts once near the closed-form time") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const double dt = 1e-3;
  const TruthRun run = Noiseless(ball, kBallFalling, Vec({1.0, 0.0}), 0.8, dt);
  REQUIRE(run.transitions.size() == 1);
  CHECK(run.transitions[0].from == kBallFalling);
  CHECK(run.transitions[0].to == kBallRising);
  const double t_hit = (run.transitions[0].step + 1) * dt;
  CHECK(std::abs(t_hit - std::sqrt(2.0 / 9.81)) < 2.0 * dt);
  CHECK(run.states.size() == 801);
  CHECK(run.measurements.dY.size() == 800);
}

TEST_CASE("simulate truth: noiseless trajectories do not depend on the seed") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const TruthRun a = Noiseless(ball, kBallFalling, Vec({1.0, 0.0}), 0.8, 0.01, 1);
  const TruthRun b = Noiseless(ball, kBallFalling, Vec({1.0, 0.0}), 0.8, 0.01, 99);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    CHECK(a.states[i].x == b.states[i].x);
    CHECK(a.states[i].mode == b.states[i].mode);
  }
}

TEST_CASE("simulate truth: invalid horizon or step is rejected") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  Rng p(1, StreamTag::kTruthProcess), m(1, StreamTag::kMeasurement);
  CHECK(KindOf([&] { SimulateTruth(ball, {kBallFalling, Vec({1.0, 0.0}), 0.0, 0.0}, 0.0, 0.01, p, m); }) ==
        ErrorKind::kPrecondition);
  CHECK(KindOf([&] { SimulateTruth(ball, {kBallFalling, Vec({1.0, 0.0}), 0.0, 0.0}, 1.0, -0.01, p, m); }) ==
        ErrorKind::kPrecondition);
}

TEST_CASE("shipped SLIP config touches down once within the horizon") {
  const ExperimentConfig cfg = LoadConfig(std::string(SPIPF_CONFIG_DIR) + "/slip.ini");
  const HybridSystem slip = BuildSystem(cfg.system, cfg.filter.epsilon);
  for (int trial = 0; trial < 10; ++trial) {
    const TruthRun run = SimulateTrial(cfg, slip, cfg.filter.dt, trial);
    REQUIRE(run.transitions.size() == 1);
    CHECK(run.transitions[0].from == kSlipFlight);
    CHECK(run.transitions[0].to == kSlipStance);
    const double t = run.transitions[0].step * cfg.filter.dt;
    CHECK(t > 0.25);
    CHECK(t < 0.45);
  }
}

}  // namespace
}  // namespace spipf
