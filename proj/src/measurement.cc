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

#include "spipf/measurement.h"

#include <cmath>
#include <algorithm>

#include <fmt/format.h>

#include "spipf/error.h"

namespace spipf {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void HashBytes(std::uint64_t* h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    *h ^= bytes[i];
    *h *= kFnvPrime;
  }
}

}  // namespace

Vector MeasurementPath::Cumulative(int i) const {
  if (i < 0 || i > steps()) {
    throw Error(ErrorKind::kRange, fmt::format("cumulative index {} out of range", i));
  }
  Vector y = Vector::Zero(dY.empty() ? 0 : dY.front().size());
  for (int l = 0; l < i; ++l) y += dY[l];
  return y;
}

std::uint64_t ContentHash(const MeasurementPath& path) {
  std::uint64_t h = kFnvOffset;
  HashBytes(&h, path.times.data(), path.times.size() * sizeof(double));
  for (const Vector& v : path.dY) HashBytes(&h, v.data(), v.size() * sizeof(double));
  HashBytes(&h, path.sigma_B.data(), path.sigma_B.size() * sizeof(double));
  for (ModeId m : path.mode_labels) HashBytes(&h, &m.index, sizeof(int));
  return h;
}

MeasurementPath GenerateMeasurements(const HybridSystem& system,
                                     std::span<const HybridState> truth,
                                     Rng& rng) {
  MeasurementPath path;
  path.sigma_B = system.obs_noise_sigma;
  if (truth.empty()) return path;

  const int n = static_cast<int>(truth.size()) - 1;
  path.times.reserve(truth.size());
  for (const HybridState& s : truth) path.times.push_back(s.t);
  if (n >= 1) {
    const double dt = truth[1].t - truth[0].t;
    if (!(dt > 0.0)) throw Error(ErrorKind::kPrecondition, "time grid must increase");
    for (int i = 0; i < n; ++i) {
      if (std::abs((truth[i + 1].t - truth[i].t) - dt) > 1e-9 * std::max(1.0, dt) + 1e-12) {
        throw Error(ErrorKind::kPrecondition, "truth time grid is not uniform");
      }
    }
  }

  path.dY.reserve(n);
  path.mode_labels.reserve(n);
  for (int i = 0; i < n; ++i) {
    const HybridState& s = truth[i];
    const double dt = truth[i + 1].t - s.t;
    const double sigma = system.obs_noise_sigma[s.mode.index];
    Vector dy = system.Observe(s.mode, s.t, s.x) * dt;
    dy += sigma * rng.NormalVector(system.obs_dim, std::sqrt(dt));
    if (!dy.allFinite()) {
      throw Error(ErrorKind::kNumericalDivergence, "non-finite measurement increment");
    }
    path.dY.push_back(std::move(dy));
    path.mode_labels.push_back(s.mode);
  }
  return path;
}

CostEvaluator::CostEvaluator(const HybridSystem& system,
                             const MeasurementPath& path, int begin, int end,
                             double epsilon)
    : system_(&system), path_(&path), begin_(begin), end_(end), epsilon_(epsilon) {
  if (begin < 0 || end > path.steps() || begin > end) {
    throw Error(ErrorKind::kRange,
                fmt::format("window [{}, {}) outside measurement path of {} steps",
                            begin, end, path.steps()));
  }
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kPrecondition, "epsilon must be positive");
}

void CostEvaluator::CheckIndex(int i) const {
  if (i < begin_ || i >= end_) {
    throw Error(ErrorKind::kRange,
                fmt::format("step {} outside window [{}, {})", i, begin_, end_));
  }
}

double CostEvaluator::StepCost(int i, const Vector& x, ModeId mode) const {
  CheckIndex(i);
  const double sigma = path_->sigma_B[mode.index];
  const Vector h = system_->Observe(mode, path_->times[i], x);
  return (0.5 * h.squaredNorm() * path_->dt(i) - h.dot(path_->dY[i])) /
         (sigma * sigma);
}

void CostEvaluator::StepCostDerivatives(int i, const Vector& x, ModeId mode,
                                        Vector* l_x, Matrix* l_xx) const {
  CheckIndex(i);
  const double sigma = path_->sigma_B[mode.index];
  const double t = path_->times[i];
  const double dt = path_->dt(i);
  const Vector h = system_->Observe(mode, t, x);
  const Matrix jac = system_->ObservationJacobian(mode, t, x);
  const double scale = 1.0 / (sigma * sigma);
  *l_x = scale * jac.transpose() * (h * dt - path_->dY[i]);
  *l_xx = scale * dt * jac.transpose() * jac;
}

std::vector<double> SuIncrements(const CostEvaluator& eval,
                                 std::span<const Vector> states,
                                 std::span<const Vector> controls,
                                 std::span<const Vector> noises,
                                 std::span<const ModeId> modes) {
  const int n = eval.steps();
  if (static_cast<int>(controls.size()) != n || static_cast<int>(noises.size()) != n ||
      static_cast<int>(states.size()) != n + 1 ||
      static_cast<int>(modes.size()) != n + 1) {
    throw Error(ErrorKind::kShape,
                fmt::format("S_u inputs misaligned: {} states, {} controls, {} "
                            "noises, {} modes for a {}-step window",
                            states.size(), controls.size(), noises.size(),
                            modes.size(), n));
  }
  const double eps = eval.epsilon();
  const double inv_sqrt_eps = 1.0 / std::sqrt(eps);
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) {
    const int i = eval.begin() + k;
    double s = eval.StepCost(i, states[k], modes[k]);
    const Vector& u = controls[k];
    if (u.size() > 0) {
      if (u.size() != noises[k].size()) {
        throw Error(ErrorKind::kShape, "control and noise dimensions differ");
      }
      s += 0.5 / eps * u.squaredNorm() * eval.dt(i) + inv_sqrt_eps * u.dot(noises[k]);
    }
    out[k] = s;
  }
  return out;
}

double AccumulateSu(const CostEvaluator& eval, std::span<const Vector> states,
                    std::span<const Vector> controls,
                    std::span<const Vector> noises,
                    std::span<const ModeId> modes) {
  double total = 0.0;
  for (double s : SuIncrements(eval, states, controls, noises, modes)) total += s;
  return total;
}

std::vector<Vector> ExtendReference(const HybridSystem& system,
                                    std::span<const Vector> states,
                                    std::span<const ModeId> modes,
                                    ModeId target, ExtensionDirection direction,
                                    int n_steps, double t0, double dt) {
  if (states.empty() || states.size() != modes.size()) {
    throw Error(ErrorKind::kShape, "reference states and modes must align");
  }
  if (n_steps < 0) throw Error(ErrorKind::kPrecondition, "n_steps must be >= 0");
  const ModeDynamics& mode = system.mode(target);
  const int n = static_cast<int>(states.size());
  const bool forward = direction == ExtensionDirection::kForward;

  int anchor_index = -1;
  if (forward) {
    for (int i = n - 1; i >= 0; --i) {
      if (modes[i] == target) { anchor_index = i; break; }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      if (modes[i] == target) { anchor_index = i; break; }
    }
  }

  Vector anchor;
  double t_anchor = 0.0;
  if (anchor_index >= 0) {
    anchor = states[anchor_index];
    t_anchor = t0 + anchor_index * dt;
  } else {
    const int boundary = forward ? n - 1 : 0;
    const Transition* tr = system.Find(modes[boundary], target);
    if (tr == nullptr) {
      throw Error(ErrorKind::kModeMismatch,
                  fmt::format("mode {} is not reachable from mode {} in one transition",
                              target.index, modes[boundary].index));
    }
    t_anchor = t0 + boundary * dt;
    anchor = tr->reset(t_anchor, states[boundary], 0.0);
  }
  if (anchor.size() != mode.state_dim) {
    throw Error(ErrorKind::kShape, "reference anchor has the wrong dimension");
  }

  std::vector<Vector> out;
  out.reserve(n_steps + 1);
  out.push_back(anchor);
  const double h = forward ? dt : -dt;
  double t = t_anchor;
  for (int q = 0; q < n_steps; ++q) {
    const Vector& x = out.back();
    out.push_back(x + h * mode.flow(t, x));
    t += h;
    if (!out.back().allFinite()) {
      throw Error(ErrorKind::kNumericalDivergence, "reference extension diverged");
    }
  }
  return out;
}

}  // namespace spipf
