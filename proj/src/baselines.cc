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

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "spipf/error.h"
#include "spipf/kernels.h"
#include "spipf/rng.h"

namespace spipf {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

EstimateRecord SkfRecord(const GaussianBelief& b) {
  return EstimateRecord{b.t, b.mean, b.mode, b.contact, 1.0, {}};
}

}  // namespace

void GaussianBelief::Condition() {
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const double min_ev = eig.eigenvalues().minCoeff();
  if (min_ev >= 0.0) return;
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (min_ev < -1e-8 * scale) {
    throw Error(ErrorKind::kNumericalDivergence,
                fmt::format("covariance lost definiteness (eigenvalue {:.3e})", min_ev));
  }
  const Vector clamped = eig.eigenvalues().cwiseMax(0.0);
  cov = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
}

GaussianBelief SkfUpdate(const HybridSystem& system, const GaussianBelief& b,
                         const Vector& dY, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kPrecondition, "dt must be positive");
  const double sigma = system.obs_noise_sigma[b.mode.index];
  const Matrix h_jac = system.ObservationJacobian(b.mode, b.t, b.mean);
  const Vector h = system.Observe(b.mode, b.t, b.mean);
  const int p = system.obs_dim;
  const Matrix r = (sigma * sigma / dt) * Matrix::Identity(p, p);
  const Matrix s = h_jac * b.cov * h_jac.transpose() + r;
  const Matrix gain = s.ldlt().solve(h_jac * b.cov).transpose();

  GaussianBelief out = b;
  out.mean = b.mean + gain * (dY / dt - h);
  const int n = static_cast<int>(b.mean.size());
  const Matrix i_kh = Matrix::Identity(n, n) - gain * h_jac;
  out.cov = i_kh * b.cov * i_kh.transpose() + gain * r * gain.transpose();
  out.Condition();
  return out;
}

GaussianBelief SkfPredict(const HybridSystem& system, const GaussianBelief& b,
                          double dt) {
  const ModeDynamics& mode = system.mode(b.mode);
  const Vector u = Vector::Zero(mode.noise_dim);
  const FlowJacobians fj = ComputeFlowJacobians(mode, b.t, b.mean, u);
  const int n = mode.state_dim;
  const Matrix a_d = Matrix::Identity(n, n) + fj.A * dt;
  Matrix cov = a_d * b.cov * a_d.transpose() +
               system.noise_scale * dt * fj.B * fj.B.transpose();

  const HybridState s{b.mode, b.mean, b.t, b.contact};
  const StepResult r = Step(system, s, u, dt, Vector::Zero(mode.noise_dim));
  GaussianBelief out;
  out.mean = r.state.x;
  out.mode = r.state.mode;
  out.t = r.state.t;
  out.contact = r.state.contact;
  if (r.event) {
    const TransitionEvent& ev = *r.event;
    const Transition& tr = system.transitions[ev.transition];
    Matrix xi;
    try {
      xi = SaltationMatrix(system, tr, ev.t, ev.pre, u, b.contact);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kGrazingContact) throw;
      xi = tr.reset_jacobian(ev.t, ev.pre).dx;
    }
    cov = xi * cov * xi.transpose();
  }
  out.cov = cov;
  out.Condition();
  return out;
}

GaussianBelief SkfStep(const HybridSystem& system, const GaussianBelief& b,
                       const Vector& dY, double dt) {
  return SkfPredict(system, SkfUpdate(system, b, dY, dt), dt);
}

GaussianBelief PriorBelief(const PriorSpec& prior, double t0) {
  const auto it = std::max_element(prior.mode_probabilities.begin(),
                                   prior.mode_probabilities.end());
  const int m = static_cast<int>(it - prior.mode_probabilities.begin());
  GaussianBelief b;
  b.mode = ModeId(m);
  b.mean = prior.mean[m];
  b.cov = prior.cov[m];
  b.t = t0;
  return b;
}

RunResult RunSkf(const HybridSystem& system, const MeasurementPath& path,
                 const GaussianBelief& init) {
  RunResult result;
  GaussianBelief b = init;
  b.t = path.times.empty() ? init.t : path.times[0];
  result.records.push_back(SkfRecord(b));
  for (int i = 0; i < path.steps(); ++i) {
    b = SkfStep(system, b, path.dY[i], path.dt(i));
    b.t = path.times[i + 1];
    result.records.push_back(SkfRecord(b));
  }
  return result;
}

RunResult RunSir(const HybridSystem& system, const MeasurementPath& path,
                 const FilterConfig& config) {
  config.Validate();
  const int L = path.steps();
  if (L < 1) throw Error(ErrorKind::kPrecondition, "measurement path is empty");

  std::vector<HybridState> states;
  for (const Particle& p : SampleEnsemble(system, config.prior, config.K, config.seed)) {
    states.push_back(p.prior);
    states.back().t = path.times[0];
  }
  std::vector<double> lw(config.K, -std::log(static_cast<double>(config.K)));
  std::vector<char> alive(config.K, 1);

  RunResult result;
  auto record = [&](int j, double gamma) {
    const Estimate est = VoteAndEstimate(system, states, lw);
    EstimateRecord rec{path.times[j], est.x_hat, est.mode_hat, est.contact, gamma, {}};
    if (config.record_particles) {
      for (double v : lw) rec.weights.push_back(std::exp(v));
    }
    result.records.push_back(std::move(rec));
  };
  record(0, 1.0);

  for (int j = 1; j <= L; ++j) {
    const int i = j - 1;
    const CostEvaluator eval(system, path, i, j, config.epsilon);
    for (int k = 0; k < config.K; ++k) {
      if (alive[k]) lw[k] -= eval.StepCost(i, states[k].x, states[k].mode);
    }
    PropagateUncontrolled(system, &states, &alive, path.dt(i), config.seed, j,
                          config.execution);
    int n_alive = 0;
    for (int k = 0; k < config.K; ++k) {
      if (!alive[k]) {
        lw[k] = -kInf;
      } else {
        ++n_alive;
      }
      states[k].t = path.times[j];
    }
    if (n_alive == 0) {
      throw Error(ErrorKind::kFilterFailure,
                  fmt::format("every SIR particle diverged at step {}", j));
    }
    NormalizeLogWeights(&lw);
    const double gamma = EffectiveRatio(lw);
    record(j, gamma);

    if (gamma < config.gamma_thres) {
      Rng rng(config.seed, StreamTag::kSirResample, j);
      const std::vector<int> idx = MultinomialResample(lw, config.K, rng);
      std::vector<HybridState> next(config.K);
      for (int k = 0; k < config.K; ++k) next[k] = states[idx[k]];
      states = std::move(next);
      std::fill(alive.begin(), alive.end(), 1);
      std::fill(lw.begin(), lw.end(), -std::log(static_cast<double>(config.K)));
      ++result.diagnostics.resampling_events;
    }
  }
  return result;
}

RunResult RunSpipfZeroControl(const HybridSystem& system,
                              const MeasurementPath& path,
                              const FilterConfig& config) {
  return Run(system, path, config, ControlPolicy::kZero);
}

}  // namespace spipf
