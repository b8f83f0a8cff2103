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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include <fmt/format.h>

namespace spipf {
namespace {

struct BackwardPass {
  std::vector<Vector> k;
  std::vector<Matrix> K;
  std::vector<Vector> value_x;
  // Expected cost change for step alpha: alpha d1 + alpha^2 d2.
  double d1 = 0.0;
  double d2 = 0.0;
};

std::vector<double> WindowTimes(const CostEvaluator& eval) {
  std::vector<double> times;
  times.reserve(eval.steps() + 1);
  for (int i = eval.begin(); i <= eval.end(); ++i) times.push_back(eval.time(i));
  return times;
}

// Linearized discrete dynamics of step n along the nominal, including the
// saltation matrix when the nominal crosses a guard during the step.
void StepLinearization(const HybridSystem& system, const Rollout& nominal,
                       const std::vector<double>& times, int n, Matrix* a_d,
                       Matrix* b_d) {
  const ModeId m = nominal.modes[n];
  const ModeDynamics& mode = system.mode(m);
  const double t = times[n];
  const double dt = times[n + 1] - t;
  const Vector& x = nominal.states[n];
  const Vector& u = nominal.controls[n];
  const FlowJacobians fj = ComputeFlowJacobians(mode, t, x, u);
  *a_d = Matrix::Identity(mode.state_dim, mode.state_dim) + fj.A * dt;
  *b_d = fj.B * dt;

  const auto it = std::find(nominal.event_steps.begin(), nominal.event_steps.end(), n);
  if (it == nominal.event_steps.end()) return;
  const TransitionEvent& ev = nominal.events[it - nominal.event_steps.begin()];
  const Transition& tr = system.transitions[ev.transition];
  Matrix xi;
  try {
    xi = SaltationMatrix(system, tr, ev.t, ev.pre, u, nominal.contact[n]);
  } catch (const Error& e) {
    // A tangential crossing has no timing correction to offer; the reset
    // Jacobian is the remaining first-order map.
    if (e.kind() != ErrorKind::kGrazingContact) throw;
    xi = tr.reset_jacobian(ev.t, ev.pre).dx;
  }
  *a_d = xi * *a_d;
  *b_d = xi * *b_d;
}

std::optional<BackwardPass> RunBackwardPass(const HybridSystem& system,
                                            const CostEvaluator& eval,
                                            const Rollout& nominal,
                                            const std::vector<double>& times,
                                            double reg) {
  const int n_steps = eval.steps();
  BackwardPass bp;
  bp.k.resize(n_steps);
  bp.K.resize(n_steps);
  bp.value_x.resize(n_steps + 1);

  const int last_dim = system.mode(nominal.modes[n_steps]).state_dim;
  Vector v_x = Vector::Zero(last_dim);
  Matrix v_xx = Matrix::Zero(last_dim, last_dim);
  bp.value_x[n_steps] = v_x;

  const double inv_eps = 1.0 / eval.epsilon();
  for (int n = n_steps - 1; n >= 0; --n) {
    Matrix a_d, b_d;
    StepLinearization(system, nominal, times, n, &a_d, &b_d);
    const ModeId m = nominal.modes[n];
    const Vector& x = nominal.states[n];
    const Vector& u = nominal.controls[n];
    const double dt = times[n + 1] - times[n];

    Vector l_x;
    Matrix l_xx;
    eval.StepCostDerivatives(eval.begin() + n, x, m, &l_x, &l_xx);
    const Vector l_u = inv_eps * dt * u;
    const Matrix l_uu = inv_eps * dt * Matrix::Identity(u.size(), u.size());

    const Matrix v_reg =
        v_xx + reg * Matrix::Identity(v_xx.rows(), v_xx.cols());
    const Vector q_x = l_x + a_d.transpose() * v_x;
    const Vector q_u = l_u + b_d.transpose() * v_x;
    const Matrix q_xx = l_xx + a_d.transpose() * v_xx * a_d;
    const Matrix q_uu = l_uu + b_d.transpose() * v_reg * b_d;
    const Matrix q_ux = b_d.transpose() * v_reg * a_d;

    Eigen::LLT<Matrix> llt(q_uu);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Vector k = -llt.solve(q_u);
    const Matrix K = -llt.solve(q_ux);
    if (!k.allFinite() || !K.allFinite()) return std::nullopt;

    bp.d1 += k.dot(q_u);
    bp.d2 += 0.5 * k.dot(q_uu * k);
    v_x = q_x + K.transpose() * q_uu * k + K.transpose() * q_u +
          q_ux.transpose() * k;
    v_xx = q_xx + K.transpose() * q_uu * K + K.transpose() * q_ux +
           q_ux.transpose() * K;
    v_xx = 0.5 * (v_xx + v_xx.transpose()).eval();
    bp.k[n] = k;
    bp.K[n] = K;
    bp.value_x[n] = v_x;
  }
  return bp;
}

GainSchedule ScheduleFromNominal(const Rollout& nominal,
                                 const std::vector<double>& times,
                                 std::vector<Vector> k_ff,
                                 std::vector<Matrix> K_fb) {
  GainSchedule g;
  g.times = times;
  g.k_ff = std::move(k_ff);
  g.K_fb = std::move(K_fb);
  g.ref_states = nominal.states;
  g.ref_modes = nominal.modes;
  g.ref_contact = nominal.contact;
  g.transition_steps = nominal.event_steps;
  return g;
}

// Candidate policy u = u_bar + alpha k + K (x - x_bar) around `nominal`.
Rollout ForwardPass(const HybridSystem& system, const Rollout& nominal,
                    const std::vector<double>& times, const BackwardPass& bp,
                    double alpha) {
  std::vector<Vector> k_ff(bp.k.size());
  for (std::size_t n = 0; n < bp.k.size(); ++n) {
    k_ff[n] = nominal.controls[n] + alpha * bp.k[n];
  }
  const GainSchedule candidate = ScheduleFromNominal(nominal, times, std::move(k_ff), bp.K);
  const ReferenceTable table(system, candidate);
  const HybridState x0{nominal.modes[0], nominal.states[0], times[0], nominal.contact[0]};
  return RolloutControlled(system, candidate, table, x0, nullptr);
}

GainSchedule Finalize(const HybridSystem& system, const CostEvaluator& eval,
                      const Rollout& nominal, const std::vector<double>& times,
                      double cost, double reg, const ILQRSettings& settings,
                      int iterations) {
  std::optional<BackwardPass> bp;
  for (double r = std::max(reg, settings.reg_init); !bp && r <= settings.reg_max * 10;
       r *= 10.0) {
    bp = RunBackwardPass(system, eval, nominal, times, r);
  }
  if (!bp) {
    throw Error(ErrorKind::kNumericalDivergence,
                "backward pass failed at every regularization level");
  }
  GainSchedule g = ScheduleFromNominal(nominal, times, nominal.controls, bp->K);
  g.value_x = std::move(bp->value_x);
  g.cost = cost;
  g.iterations = iterations;
  return g;
}

}  // namespace

std::vector<double> ILQRSettings::DefaultAlphas() {
  std::vector<double> alphas;
  for (int i = 0; i < 10; ++i) alphas.push_back(std::pow(10.0, -i / 3.0));
  return alphas;
}

void ILQRSettings::Validate() const {
  if (max_iters < 1 || !(cost_tol > 0.0) || !(reg_init > 0.0) ||
      !(reg_max > 0.0) || reg_init > reg_max || line_search_alphas.empty()) {
    throw Error(ErrorKind::kPrecondition, "invalid iLQR settings");
  }
  for (double a : line_search_alphas) {
    if (!(a > 0.0)) throw Error(ErrorKind::kPrecondition, "line search steps must be positive");
  }
}

ReferenceTable::ReferenceTable(const HybridSystem& system,
                               const GainSchedule& gains) {
  const int num_modes = system.num_modes();
  entries_.resize(num_modes);
  available_.assign(num_modes, true);
  missing_reason_.resize(num_modes);
  if (gains.zero_control) return;
  for (int m = 0; m < num_modes; ++m) BuildMode(system, gains, ModeId(m));
}

void ReferenceTable::BuildMode(const HybridSystem& system,
                               const GainSchedule& gains, ModeId m) {
  const int n_steps = gains.steps();
  const double t0 = gains.times.front();
  const double dt = n_steps > 0 ? gains.times[1] - gains.times[0] : 0.0;
  const auto& modes = gains.ref_modes;
  const auto& states = gains.ref_states;
  const ModeDynamics& target = system.mode(m);
  std::vector<Entry>& out = entries_[m.index];
  out.resize(n_steps + 1);

  std::map<int, std::vector<Vector>> forward_cache;
  std::map<int, std::vector<Vector>> backward_cache;
  for (int n = 0; n <= n_steps; ++n) {
    Entry& e = out[n];
    if (modes[n] == m) {
      e.ref = states[n];
      e.gain_step = n < n_steps ? n : -1;
      e.source = ReferenceSource::kNominal;
      continue;
    }
    int last = -1;
    for (int s = n - 1; s >= 0; --s) {
      if (modes[s] == m) { last = s; break; }
    }
    if (last >= 0) {
      auto it = forward_cache.find(last);
      if (it == forward_cache.end()) {
        it = forward_cache
                 .emplace(last, ExtendReference(
                                    system,
                                    std::span(states).first(last + 1),
                                    std::span(modes).first(last + 1), m,
                                    ExtensionDirection::kForward,
                                    n_steps - last, t0, dt))
                 .first;
      }
      e.ref = it->second[n - last];
      e.gain_step = last;
      e.source = ReferenceSource::kForwardExtension;
      continue;
    }
    int first = -1;
    for (int s = n + 1; s <= n_steps; ++s) {
      if (modes[s] == m) { first = s; break; }
    }
    if (first >= 0) {
      auto it = backward_cache.find(first);
      if (it == backward_cache.end()) {
        it = backward_cache
                 .emplace(first, ExtendReference(
                                     system, std::span(states).subspan(first),
                                     std::span(modes).subspan(first), m,
                                     ExtensionDirection::kBackward, first,
                                     t0 + first * dt, dt))
                 .first;
      }
      e.ref = it->second[first - n];
      e.gain_step = first < n_steps ? first : -1;
      e.source = ReferenceSource::kBackwardExtension;
      continue;
    }
    const Transition* tr = system.Find(modes[n], m);
    if (tr == nullptr) {
      available_[m.index] = false;
      missing_reason_[m.index] = fmt::format(
          "no reference for mode {}: the nominal never visits it and no "
          "transition from mode {} leads there",
          m.index, modes[n].index);
      return;
    }
    e.ref = tr->reset(gains.times[n], states[n], gains.ref_contact[n]);
    e.source = ReferenceSource::kResetMapped;
    const ModeDynamics& nominal_mode = system.mode(modes[n]);
    const bool same_shape = nominal_mode.state_dim == target.state_dim &&
                            nominal_mode.noise_dim == target.noise_dim;
    e.gain_step = same_shape && n < n_steps ? n : -1;
  }
}

const ReferenceTable::Entry& ReferenceTable::Lookup(ModeId mode, int n) const {
  if (mode.index < 0 || mode.index >= static_cast<int>(entries_.size())) {
    throw Error(ErrorKind::kRange, fmt::format("unknown mode {}", mode.index));
  }
  if (!available_[mode.index]) {
    throw Error(ErrorKind::kModeMismatch, missing_reason_[mode.index]);
  }
  const auto& row = entries_[mode.index];
  if (n < 0 || n >= static_cast<int>(row.size())) {
    throw Error(ErrorKind::kRange, fmt::format("reference step {} out of range", n));
  }
  return row[n];
}

Rollout RolloutControlled(const HybridSystem& system, const GainSchedule& gains,
                          const ReferenceTable& table, const HybridState& x0,
                          Rng* rng, int start_step) {
  const int n_steps = gains.steps();
  if (start_step < 0 || start_step > n_steps) {
    throw Error(ErrorKind::kRange, "rollout start outside the window");
  }
  const int len = n_steps - start_step;
  Rollout r;
  r.states.reserve(len + 1);
  r.modes.reserve(len + 1);
  r.contact.reserve(len + 1);
  r.controls.reserve(len);
  r.noises.reserve(len);
  r.sources.reserve(len);

  HybridState s = x0;
  r.states.push_back(s.x);
  r.modes.push_back(s.mode);
  r.contact.push_back(s.contact);
  for (int n = start_step; n < n_steps; ++n) {
    const ModeDynamics& mode = system.mode(s.mode);
    const double dt = gains.times[n + 1] - gains.times[n];
    Vector u = Vector::Zero(mode.noise_dim);
    ReferenceSource source = ReferenceSource::kNominal;
    if (!gains.zero_control) {
      const ReferenceTable::Entry& e = table.Lookup(s.mode, n);
      source = e.source;
      if (e.gain_step >= 0) {
        const Matrix& K = gains.K_fb[e.gain_step];
        const Vector& k = gains.k_ff[e.gain_step];
        if (K.rows() != mode.noise_dim || K.cols() != mode.state_dim ||
            k.size() != mode.noise_dim) {
          throw Error(ErrorKind::kShape,
                      fmt::format("gain at step {} does not fit mode '{}'",
                                  e.gain_step, mode.name));
        }
        u = k + K * (s.x - e.ref);
      }
    }
    Vector dw = rng != nullptr ? rng->NormalVector(mode.noise_dim, std::sqrt(dt))
                               : Vector::Zero(mode.noise_dim);
    StepResult step = Step(system, s, u, dt, dw);
    if (step.event) {
      r.events.push_back(*step.event);
      r.event_steps.push_back(n);
    }
    s = std::move(step.state);
    r.controls.push_back(std::move(u));
    r.noises.push_back(std::move(dw));
    r.sources.push_back(source);
    r.states.push_back(s.x);
    r.modes.push_back(s.mode);
    r.contact.push_back(s.contact);
  }
  return r;
}

double NominalCost(const CostEvaluator& eval, const Rollout& r, int start_step) {
  const double inv_eps = 1.0 / eval.epsilon();
  double cost = 0.0;
  for (std::size_t q = 0; q < r.controls.size(); ++q) {
    const int i = eval.begin() + start_step + static_cast<int>(q);
    cost += 0.5 * inv_eps * r.controls[q].squaredNorm() * eval.dt(i) +
            eval.StepCost(i, r.states[q], r.modes[q]);
  }
  return cost;
}

GainSchedule ZeroSchedule(const HybridSystem& system, const CostEvaluator& eval,
                          const HybridState& init_state) {
  GainSchedule g;
  g.times = WindowTimes(eval);
  g.zero_control = true;
  const int n_steps = eval.steps();
  g.k_ff.resize(n_steps);
  g.K_fb.resize(n_steps);
  // Placeholder sizes until the nominal is known.
  for (int n = 0; n < n_steps; ++n) {
    g.k_ff[n] = Vector::Zero(0);
    g.K_fb[n] = Matrix::Zero(0, 0);
  }
  const ReferenceTable table(system, g);
  const Rollout r = RolloutControlled(system, g, table, init_state, nullptr);
  for (int n = 0; n < n_steps; ++n) {
    const ModeDynamics& mode = system.mode(r.modes[n]);
    g.k_ff[n] = Vector::Zero(mode.noise_dim);
    g.K_fb[n] = Matrix::Zero(mode.noise_dim, mode.state_dim);
  }
  g.ref_states = r.states;
  g.ref_modes = r.modes;
  g.ref_contact = r.contact;
  g.transition_steps = r.event_steps;
  g.cost = NominalCost(eval, r);
  return g;
}

GainSchedule SolveWindow(const HybridSystem& system, const CostEvaluator& eval,
                         const HybridState& init_state,
                         const ILQRSettings& settings) {
  settings.Validate();
  if (eval.steps() < 1) {
    throw Error(ErrorKind::kPrecondition, "iLQR window must contain at least one step");
  }
  const std::vector<double> times = WindowTimes(eval);
  if (std::abs(init_state.t - times.front()) > 1e-9) {
    throw Error(ErrorKind::kPrecondition, "initial state time does not match the window");
  }

  // Initial nominal: zero control.
  Rollout nominal;
  {
    const GainSchedule zero = ZeroSchedule(system, eval, init_state);
    const ReferenceTable table(system, zero);
    nominal = RolloutControlled(system, zero, table, init_state, nullptr);
  }
  double cost = NominalCost(eval, nominal);
  if (!std::isfinite(cost)) {
    throw Error(ErrorKind::kNumericalDivergence, "non-finite cost on the initial rollout");
  }

  double reg = settings.reg_init;
  int iter = 0;
  for (; iter < settings.max_iters; ++iter) {
    std::optional<BackwardPass> bp =
        RunBackwardPass(system, eval, nominal, times, reg);
    if (!bp) {
      reg *= 10.0;
      if (reg > settings.reg_max) break;
      continue;
    }
    // Nothing left to gain along the local model.
    if (-(bp->d1 + bp->d2) < 1e-12 * (1.0 + std::abs(cost))) break;

    bool accepted = false;
    double new_cost = cost;
    for (double alpha : settings.line_search_alphas) {
      Rollout candidate;
      try {
        candidate = ForwardPass(system, nominal, times, *bp, alpha);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kNumericalDivergence ||
            e.kind() == ErrorKind::kMultipleGuards ||
            e.kind() == ErrorKind::kModeMismatch ||
            e.kind() == ErrorKind::kSingularConfiguration) {
          continue;
        }
        throw;
      }
      const double c = NominalCost(eval, candidate);
      if (std::isfinite(c) && c < cost) {
        nominal = std::move(candidate);
        new_cost = c;
        accepted = true;
        break;
      }
    }

    if (settings.log) {
      std::string steps;
      for (int s : nominal.event_steps) steps += fmt::format(" {}", s);
      settings.log(fmt::format("iter {} cost {:.12g} reg {:.3g} accepted {} transitions [{} ]",
                               iter, accepted ? new_cost : cost, reg,
                               accepted ? 1 : 0, steps));
    }

    if (!accepted) {
      reg *= 10.0;
      if (reg > settings.reg_max) {
        ++iter;
        GainSchedule best = Finalize(system, eval, nominal, times, cost,
                                     settings.reg_init, settings, iter);
        throw SolverStalled(
            fmt::format("regularization exceeded {} after {} iterations",
                        settings.reg_max, iter),
            std::move(best));
      }
      continue;
    }
    const double decrease = cost - new_cost;
    cost = new_cost;
    reg = std::max(settings.reg_init, reg / 3.0);
    if (decrease < settings.cost_tol * std::max(std::abs(cost), 1e-12)) {
      ++iter;
      break;
    }
  }
  return Finalize(system, eval, nominal, times, cost, settings.reg_init,
                  settings, iter);
}

}  // namespace spipf
