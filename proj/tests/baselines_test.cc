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

#include "spipf/baselines.h"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "spipf/error.h"
#include "spipf/measurement.h"
#include "spipf/rng.h"
#include "spipf/systems.h"
#include "test_util.h"

namespace spipf {
namespace {

using testing::KindOf;
using testing::MaxAbs;
using testing::Vec;

TEST_CASE("skf: guardless linear model equals the textbook Kalman filter") {
  Matrix a(2, 2), b(2, 1), c(1, 2);
  a << 0.0, 1.0, -1.0, -0.3;
  b << 0.2, 1.0;
  c << 1.0, 0.5;
  const double sigma = 0.2, eps = 0.05, dt = 0.01;
  const HybridSystem sys = testing::LinearSystem(a, b, c, sigma, eps);
  Rng rng(1, StreamTag::kMeasurement);

  GaussianBelief skf;
  skf.mean = Vec({0.4, -0.2});
  skf.cov = Matrix::Identity(2, 2) * 0.3;
  skf.mode = ModeId(0);
  Vector m = skf.mean;
  Matrix p = skf.cov;
  const Matrix ad = Matrix::Identity(2, 2) + a * dt;
  const Matrix q = eps * b * b.transpose() * dt;
  const double r = sigma * sigma / dt;
  for (int i = 0; i < 200; ++i) {
    const Vector dy = rng.NormalVector(1, 0.05);
    skf = SkfStep(sys, skf, dy, dt);

    // Kalman gain form with scalar innovation.
    const double s = (c * p * c.transpose())(0, 0) + r;
    const Vector k = p * c.transpose() / s;
    m = m + k * (dy[0] / dt - (c * m)(0));
    p = p - k * c * p;
    m = ad * m;
    p = ad * p * ad.transpose() + q;

    CHECK((skf.mean - m).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(MaxAbs(skf.cov - p) < 1e-10);
  }
}

TEST_CASE("skf: identity-reset apex leaves the covariance unchanged") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  GaussianBelief b;
  b.mode = kBallRising;
  b.mean = Vec({0.8, 0.05});
  b.cov = Matrix::Identity(2, 2) * 0.01;
  b.cov(0, 1) = b.cov(1, 0) = 0.002;
  const double dt = 0.01;
  const GaussianBelief out = SkfPredict(ball, b, dt);
  REQUIRE(out.mode == kBallFalling);
  Matrix ad(2, 2);
  ad << 1.0, dt, 0.0, 1.0;
  Matrix bd(2, 1);
  bd << 0.0, 1.0;
  const Matrix expected = ad * b.cov * ad.transpose() + ball.noise_scale * dt * bd * bd.transpose();
  CHECK(MaxAbs(out.cov - expected) < 1e-14);
}

TEST_CASE("skf: impact maps the covariance through the saltation matrix") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  GaussianBelief b;
  b.mode = kBallFalling;
  b.mean = Vec({0.01, -3.0});
  b.cov = Matrix::Identity(2, 2) * 1e-4;
  const double dt = 0.01;
  const GaussianBelief out = SkfPredict(ball, b, dt);
  REQUIRE(out.mode == kBallRising);
  Matrix ad(2, 2);
  ad << 1.0, dt, 0.0, 1.0;
  Matrix bd(2, 1);
  bd << 0.0, 1.0;
  const Matrix flowed = ad * b.cov * ad.transpose() + ball.noise_scale * dt * bd * bd.transpose();
  const Vector pre = Vec({0.01 - 3.0 * dt, -3.0 - 9.81 * dt});
  const Transition& tr = *ball.Find(kBallFalling, kBallRising);
  const Matrix xi = SaltationMatrix(ball, tr, dt, pre, Vec({0.0}));
  CHECK(MaxAbs(out.cov - xi * flowed * xi.transpose()) < 1e-14);
  CHECK(out.mean[1] == doctest::Approx(-0.9 * pre[1]));
}

TEST_CASE("belief conditioning") {
  GaussianBelief b;
  b.mean = Vec({0.0, 0.0});
  b.cov = Matrix(2, 2);
  b.cov << 1.0, 0.5 + 1e-12, 0.5, 1.0;
  b.Condition();
  CHECK(b.cov(0, 1) == b.cov(1, 0));

  b.cov << 1.0, 1.0, 1.0, 1.0 - 1e-12;
  b.Condition();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(b.cov);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-15);

  b.cov << 1.0, 0.0, 0.0, -0.1;
  CHECK(KindOf([&] { b.Condition(); }) == ErrorKind::kNumericalDivergence);
}

TEST_CASE("prior belief picks the most probable mode") {
  PriorSpec p;
  p.mode_probabilities = {0.3, 0.7};
  p.mean = {Vec({1.0, 0.0}), Vec({2.0, 1.0})};
  p.cov = {Matrix::Identity(2, 2), Matrix::Identity(2, 2) * 2.0};
  const GaussianBelief b = PriorBelief(p, 0.5);
  CHECK(b.mode == ModeId(1));
  CHECK(b.mean == p.mean[1]);
  CHECK(b.t == 0.5);
}

TEST_CASE("sir likelihood concentrates on the particle at the truth") {
  LinearScalarParams lp;
  lp.obs_sigma = 1e-3;
  const HybridSystem sys = LinearScalar(lp);
  const double dt = 0.01, truth = 0.4;
  Rng rng(2, StreamTag::kMeasurement);
  const MeasurementPath path = testing::MakePath(
      {Vec({truth * dt}) + rng.NormalVector(1, lp.obs_sigma * std::sqrt(dt))}, dt, {lp.obs_sigma});
  const CostEvaluator eval(sys, path, 0, 1, 0.1);
  const std::vector<double> xs = {truth, truth + 0.1, truth - 0.1, truth + 0.3};
  std::vector<double> lw;
  for (double x : xs) lw.push_back(-eval.StepCost(0, Vec({x}), ModeId(0)));
  NormalizeLogWeights(&lw);
  CHECK(std::exp(lw[0]) > 1.0 - 1e-9);
}

TEST_CASE("sir: identical particles keep uniform weights") {
  HybridSystem ball = BouncingBall(BouncingBallParams{});
  ball.noise_scale = 1e-300;
  Rng process(3, StreamTag::kTruthProcess), meas(3, StreamTag::kMeasurement);
  const TruthRun truth =
      SimulateTruth(ball, {kBallFalling, Vec({0.5, 0.0}), 0.0, 0.0}, 0.3, 0.01, process, meas);
  FilterConfig c;
  c.K = 8;
  c.epsilon = 1e-300;
  c.prior.mode_probabilities = {1.0, 0.0};
  c.prior.mean = {Vec({0.5, 0.0}), Vector()};
  c.prior.cov = {Matrix::Zero(2, 2), Matrix()};
  const RunResult r = RunSir(ball, truth.measurements, c);
  for (const EstimateRecord& rec : r.records) CHECK(rec.esse == doctest::Approx(1.0));
  CHECK(r.diagnostics.resampling_events == 0);
}

TEST_CASE("sir resamples even when the path integral filter would not") {
  const HybridSystem ball = BouncingBall(BouncingBallParams{});
  Rng process(4, StreamTag::kTruthProcess), meas(4, StreamTag::kMeasurement);
  const TruthRun truth =
      SimulateTruth(ball, {kBallFalling, Vec({0.5, 0.0}), 0.0, 0.0}, 0.3, 0.01, process, meas);
  FilterConfig c;
  c.K = 20;
  c.epsilon = 0.1;
  c.resampling_enabled = false;
  c.gamma_thres = 0.99;
  c.prior.mode_probabilities = {1.0, 0.0};
  c.prior.mean = {Vec({0.5, 0.0}), Vector()};
  c.prior.cov = {Matrix::Identity(2, 2) * 0.01, Matrix()};
  CHECK(RunSir(ball, truth.measurements, c).diagnostics.resampling_events > 0);
}

}  // namespace
}  // namespace spipf
