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

#include "spipf/ilqr.h"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "spipf/error.h"
#include "spipf/rng.h"
#include "spipf/systems.h"
#include "test_util.h"

namespace spipf {
namespace {

using testing::KindOf;
using testing::MakePath;
using testing::Vec;

constexpr double kDt = 0.01;

// Noisy ball truth and its measurements over `n` steps from `x0`.
TruthRun BallTruth(const HybridSystem& ball, const Vector& x0, int n, std::uint64_t seed) {
  Rng process(seed, StreamTag::kTruthProcess);
  Rng meas(seed, StreamTag::kMeasurement);
  return SimulateTruth(ball, {kBallFalling, x0, 0.0, 0.0}, n * kDt, kDt, process, meas);
}

// Closed-loop cost from `start` of a noiseless rollout from `x`.
double CostToGo(const HybridSystem& sys, const GainSchedule& g, const ReferenceTable& table,
                const CostEvaluator& eval, const HybridState& x, int start) {
  const Rollout r = RolloutControlled(sys, g, table, x, nullptr, start);
  return NominalCost(eval, r, start);
}

Vector FdGradient(const std::function<double(const Vector&)>& f, const Vector& x,
                  double h) {
  Vector g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

TEST_CASE("solve window: quadratic problem reproduces discrete LQR") {
  Matrix a(2, 2), b(2, 1);
  a << 0.0, 1.0, -2.0, -0.5;
  b << 0.0, 1.0;
  const double sigma = 0.5, eps = 0.1;
  const HybridSystem sys =
      testing::LinearSystem(a, b, Matrix::Identity(2, 2), sigma, eps);
  const int n = 20;
  const MeasurementPath path = MakePath(std::vector<Vector>(n, Vector::Zero(2)), kDt, {sigma});
  const CostEvaluator eval(sys, path, 0, n, eps);
  const Vector x0 = Vec({1.0, -0.5});
  ILQRSettings settings;
  settings.cost_tol = 1e-14;
  const GainSchedule g = SolveWindow(sys, eval, {ModeId(0), x0, 0.0, 0.0}, settings);

  // Riccati recursion on the Euler-discretized matrices.
  const Matrix ad = Matrix::Identity(2, 2) + a * kDt;
  const Matrix bd = b * kDt;
  const Matrix q = Matrix::Identity(2, 2) * kDt / (sigma * sigma);
  const Matrix r = Matrix::Identity(1, 1) * kDt / eps;
  std::vector<Matrix> gains(n);
  Matrix p = Matrix::Zero(2, 2);
  for (int k = n - 1; k >= 0; --k) {
    const Matrix s = r + bd.transpose() * p * bd;
    gains[k] = -s.ldlt().solve(bd.transpose() * p * ad);
    p = q + ad.transpose() * p * ad + ad.transpose() * p * bd * gains[k];
    p = 0.5 * (p + p.transpose()).eval();
  }
  REQUIRE(g.steps() == n);
  CHECK(g.transition_steps.empty());
  Vector x = x0;
  for (int k = 0; k < n; ++k) {
    CHECK((g.K_fb[k] - gains[k]).cwiseAbs().maxCoeff() < 1e-6);
    const Vector u = gains[k] * x;
    CHECK((g.k_ff[k] - u).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((g.ref_states[k] - x).cwiseAbs().maxCoeff() < 1e-6);
    x = ad * x + bd * u;
  }
}

TEST_CASE("solve window: value gradient matches closed-loop finite differences") {
  SUBCASE("bouncing ball away from the ground") {
    const HybridSystem ball = BouncingBall(BouncingBallParams{});
    const TruthRun truth = BallTruth(ball, Vec({2.0, 0.0}), 10, 3);
    const CostEvaluator eval(ball, truth.measurements, 0, 10, 0.1);
    ILQRSettings settings;
    settings.cost_tol = 1e-13;
    const HybridState x0{kBallFalling, Vec({1.9, 0.2}), 0.0, 0.0};
    const GainSchedule g = SolveWindow(ball, eval, x0, settings);
    REQUIRE(g.transition_steps.empty());
    const ReferenceTable table(ball, g);
    const auto j = [&](const Vector& x) {
      return CostToGo(ball, g, table, eval, {kBallFalling, x, 0.0, 0.0}, 0);
    };
    const Vector fd = FdGradient(j, g.ref_states[0], 1e-5);
    CHECK((fd - g.value_x[0]).norm() < 1e-4 * fd.norm());
  }
  SUBCASE("SLIP stance without liftoff") {
    SlipParams sp;
    const HybridSystem slip = Slip(sp);
    const int n = 10;
    Rng rng(9, StreamTag::kMeasurement);
    std::vector<Vector> dY;
    for (int i = 0; i < n; ++i) {
      Vector y = Vector::Zero(5);
      y.head(4) = Vec({1.5, -0.5, 0.85, -0.3}) * 1e-3 + rng.NormalVector(4, 0.1 * std::sqrt(1e-3));
      dY.push_back(y);
    }
    const MeasurementPath path = MakePath(dY, 1e-3, {0.1, 0.1});
    const CostEvaluator eval(slip, path, 0, n, 0.01);
    ILQRSettings settings;
    settings.cost_tol = 1e-13;
    const HybridState x0{kSlipStance, Vec({1.45, -0.4, 0.86, -0.2}), 0.0, 0.0};
    const GainSchedule g = SolveWindow(slip, eval, x0, settings);
    REQUIRE(g.transition_steps.empty());
    const ReferenceTable table(slip, g);
    const auto j = [&](const Vector& x) {
      return CostToGo(slip, g, table, eval, {kSlipStance, x, 0.0, 0.0}, 0);
    };
    const Vector fd = FdGradient(j, g.ref_states[0], 1e-6);
    CHECK((fd - g.value_x[0]).norm() < 1e-4 * fd.norm());
  }
}

TEST_CASE("solve window: accepted iterations never increase the cost") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const TruthRun truth = BallTruth(ball, Vec({0.08, -1.2}), 12, 5);
  const CostEvaluator eval(ball, truth.measurements, 0, 12, 0.1);
  std::vector<double> costs;
  ILQRSettings settings;
  settings.log = [&](const std::string& line) {
    std::istringstream in(line);
    std::string word;
    while (in >> word) {
      if (word == "cost") {
        double c;
        in >> c;
        costs.push_back(c);
      }
    }
  };
  const HybridState x0{kBallFalling, Vec({0.1, -1.0}), 0.0, 0.0};
  const GainSchedule g = SolveWindow(ball, eval, x0, settings);
  REQUIRE(costs.size() >= 1);
  const GainSchedule zero = ZeroSchedule(ball, eval, x0);
  CHECK(costs.front() <= zero.cost + 1e-12);
  for (std::size_t i = 1; i < costs.size(); ++i) CHECK(costs[i] <= costs[i - 1]);
  CHECK(g.cost == doctest::Approx(costs.back()).epsilon(1e-9));
}

TEST_CASE("solve window: straddling the impact beats the zero-control rollout") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const TruthRun truth = BallTruth(ball, Vec({0.05, -1.5}), 10, seed);
    REQUIRE(truth.transitions.size() == 1);
    const CostEvaluator eval(ball, truth.measurements, 0, 10, 0.1);
    const HybridState x0{kBallFalling, Vec({0.06, -1.4}), 0.0, 0.0};
    const GainSchedule g = SolveWindow(ball, eval, x0);
    const GainSchedule zero = ZeroSchedule(ball, eval, x0);
    const ReferenceTable table(ball, g);
    const double controlled = CostToGo(ball, g, table, eval, x0, 0);
    const ReferenceTable zero_table(ball, zero);
    const double uncontrolled = CostToGo(ball, zero, zero_table, eval, x0, 0);
    CHECK(controlled <= uncontrolled);
    CHECK(controlled == doctest::Approx(g.cost).epsilon(1e-9));
    CHECK_FALSE(g.transition_steps.empty());
  }
}

TEST_CASE("salted backward pass: post-impact value gradient pulled back by the saltation") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const TruthRun truth = BallTruth(ball, Vec({0.05, -1.5}), 12, 8);
  const CostEvaluator eval(ball, truth.measurements, 0, 12, 0.1);
  ILQRSettings settings;
  settings.cost_tol = 1e-13;

  // Adjust the starting height until the nominal reaches the ground exactly at
  // a step boundary, so the discrete reset and the exact-time transition
  // linearize about the same point.
  HybridState x0{kBallFalling, Vec({0.055, -1.45}), 0.0, 0.0};
  GainSchedule g;
  Rollout nominal;
  double prev_h = 0.0, prev_f = 0.0;
  for (int it = 0; it < 30; ++it) {
    g = SolveWindow(ball, eval, x0, settings);
    nominal = RolloutControlled(ball, g, ReferenceTable(ball, g), x0, nullptr);
    REQUIRE(nominal.events.size() == 1);
    const double f = nominal.events[0].pre[0] + 1e-9;
    if (std::abs(f) < 1e-11) break;
    const double slope = it == 0 ? 1.0 : (f - prev_f) / (x0.x[0] - prev_h);
    prev_h = x0.x[0];
    prev_f = f;
    x0.x[0] -= f / slope;
  }
  const TransitionEvent& ev = nominal.events[0];
  REQUIRE(std::abs(ev.pre[0]) < 1e-8);
  const ReferenceTable table(ball, g);
  const int n_post = nominal.event_steps[0] + 1;
  const Transition& tr = ball.transitions[ev.transition];

  // Cost after the impact as a function of the pre-impact state, with the
  // impact time resolved exactly.
  const auto j = [&](const Vector& pre) {
    const Vector post = PushThroughTransition(ball, tr, ev.t, pre, Vec({0.0}));
    return CostToGo(ball, g, table, eval, {kBallRising, post, ev.t, 0.0}, n_post);
  };
  const Vector fd = FdGradient(j, ev.pre, 1e-6);
  const Matrix xi = SaltationMatrix(ball, tr, ev.t, ev.pre, Vec({0.0}));
  const Vector salted = xi.transpose() * g.value_x[n_post];
  CHECK((fd - salted).norm() < 1e-3 * fd.norm());
  // The plain reset Jacobian misses the impact-time shift.
  const Vector plain = tr.reset_jacobian(ev.t, ev.pre).dx.transpose() * g.value_x[n_post];
  CHECK((fd - plain).norm() > 1e-2 * fd.norm());
}

TEST_CASE("rollout: zero schedule without noise is the uncontrolled flow") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const TruthRun truth = BallTruth(ball, Vec({0.3, 0.0}), 40, 4);
  const CostEvaluator eval(ball, truth.measurements, 0, 40, 0.1);
  const HybridState x0{kBallFalling, Vec({0.3, 0.0}), 0.0, 0.0};
  const GainSchedule zero = ZeroSchedule(ball, eval, x0);
  const ReferenceTable table(ball, zero);
  const Rollout r = RolloutControlled(ball, zero, table, x0, nullptr);
  HybridState s = x0;
  for (int n = 0; n < 40; ++n) {
    CHECK(r.controls[n].isZero(0.0));
    const double dt = zero.times[n + 1] - zero.times[n];
    s = Step(ball, s, Vec({0.0}), dt, Vec({0.0})).state;
    CHECK(r.states[n + 1] == s.x);
    CHECK(r.modes[n + 1] == s.mode);
  }
  CHECK(r.events.size() == 1);
}

TEST_CASE("rollout: starting on the reference without noise reproduces the nominal") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const TruthRun truth = BallTruth(ball, Vec({0.05, -1.5}), 10, 6);
  const CostEvaluator eval(ball, truth.measurements, 0, 10, 0.1);
  const HybridState x0{kBallFalling, Vec({0.06, -1.4}), 0.0, 0.0};
  const GainSchedule g = SolveWindow(ball, eval, x0);
  const ReferenceTable table(ball, g);
  const Rollout r = RolloutControlled(ball, g, table, x0, nullptr);
  for (int n = 0; n <= g.steps(); ++n) {
    CHECK(r.states[n] == g.ref_states[n]);
    CHECK(r.modes[n] == g.ref_modes[n]);
  }
  for (int n = 0; n < g.steps(); ++n) CHECK(r.sources[n] == ReferenceSource::kNominal);
}

TEST_CASE("rollout: early and late transitions read the extended references") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const TruthRun truth = BallTruth(ball, Vec({0.05, -1.5}), 10, 6);
  const CostEvaluator eval(ball, truth.measurements, 0, 10, 0.1);
  const HybridState x0{kBallFalling, Vec({0.06, -1.4}), 0.0, 0.0};
  const GainSchedule g = SolveWindow(ball, eval, x0);
  REQUIRE(g.transition_steps.size() == 1);
  const ReferenceTable table(ball, g);
  const int n_ref = g.transition_steps[0];

  // Lower starting heights reach the ground sooner; higher ones later.
  bool saw_early = false, saw_late = false;
  for (double dz = -0.03; dz <= 0.03; dz += 0.0025) {
    HybridState start = x0;
    start.x[0] += dz;
    const Rollout r = RolloutControlled(ball, g, table, start, nullptr);
    if (r.event_steps.size() != 1) continue;
    const int n_p = r.event_steps[0];
    if (n_p == n_ref - 1) {
      // The particle is already rising at step n_ref while the nominal is not.
      saw_early = true;
      CHECK(r.modes[n_ref] == kBallRising);
      CHECK(r.sources[n_ref] == ReferenceSource::kBackwardExtension);
      const ReferenceTable::Entry& e = table.Lookup(kBallRising, n_ref);
      CHECK(e.gain_step == n_ref + 1);
      const Vector back = ExtendReference(ball, g.ref_states, g.ref_modes, kBallRising,
                                          ExtensionDirection::kBackward, 1,
                                          g.times[n_ref + 1], kDt)[1];
      CHECK((e.ref - back).norm() < 1e-12);
    }
    if (n_p == n_ref + 1) {
      // The nominal has bounced but the particle is still falling.
      saw_late = true;
      CHECK(r.modes[n_ref + 1] == kBallFalling);
      CHECK(r.sources[n_ref + 1] == ReferenceSource::kForwardExtension);
      const ReferenceTable::Entry& e = table.Lookup(kBallFalling, n_ref + 1);
      CHECK(e.gain_step == n_ref);
      const Vector fwd = ExtendReference(ball, g.ref_states, g.ref_modes, kBallFalling,
                                         ExtensionDirection::kForward, 1,
                                         g.times[n_ref], kDt)[1];
      CHECK((e.ref - fwd).norm() < 1e-12);
    }
  }
  CHECK(saw_early);
  CHECK(saw_late);
}

TEST_CASE("reference table: unvisited modes fall back to the reset of the nominal") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  const TruthRun truth = BallTruth(ball, Vec({1.0, 0.0}), 5, 2);
  const CostEvaluator eval(ball, truth.measurements, 0, 5, 0.1);
  const GainSchedule g = SolveWindow(ball, eval, {kBallFalling, Vec({1.0, 0.0}), 0.0, 0.0});
  REQUIRE(g.transition_steps.empty());
  const ReferenceTable table(ball, g);
  const ReferenceTable::Entry& e = table.Lookup(kBallRising, 2);
  CHECK(e.source == ReferenceSource::kResetMapped);
  CHECK(e.gain_step == 2);
  const Vector expected = ball.Find(kBallFalling, kBallRising)->reset(0.0, g.ref_states[2], 0.0);
  CHECK((e.ref - expected).norm() == 0.0);
}

TEST_CASE("settings validation") {
  ILQRSettings s;
  CHECK_NOTHROW(s.Validate());
  CHECK(s.line_search_alphas.size() == 10);
  CHECK(s.line_search_alphas.front() == 1.0);
  CHECK(s.line_search_alphas.back() == doctest::Approx(1e-3));
  s.reg_init = 10.0;
  s.reg_max = 1.0;
  CHECK(KindOf([&] { s.Validate(); }) == ErrorKind::kPrecondition);
  ILQRSettings t;
  t.max_iters = 0;
  CHECK(KindOf([&] { t.Validate(); }) == ErrorKind::kPrecondition);
}

}  // namespace
}  // namespace spipf
