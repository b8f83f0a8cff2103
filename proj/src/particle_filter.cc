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

#include "spipf/particle_filter.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "spipf/error.h"
#include "spipf/kernels.h"

namespace spipf {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool Recoverable(ErrorKind kind) {
  return kind == ErrorKind::kNumericalDivergence ||
         kind == ErrorKind::kMultipleGuards ||
         kind == ErrorKind::kSingularConfiguration ||
         kind == ErrorKind::kModeMismatch ||
         kind == ErrorKind::kGrazingContact;
}

// Uncontrolled schedule that needs no nominal rollout.
GainSchedule BareZeroSchedule(const CostEvaluator& eval) {
  GainSchedule g;
  g.zero_control = true;
  for (int i = eval.begin(); i <= eval.end(); ++i) g.times.push_back(eval.time(i));
  g.k_ff.assign(eval.steps(), Vector());
  g.K_fb.assign(eval.steps(), Matrix());
  return g;
}

std::vector<HybridState> Priors(const std::vector<Particle>& particles) {
  std::vector<HybridState> out;
  out.reserve(particles.size());
  for (const Particle& p : particles) out.push_back(p.prior);
  return out;
}

std::vector<double> PriorLogWeights(const std::vector<Particle>& particles) {
  std::vector<double> out;
  out.reserve(particles.size());
  for (const Particle& p : particles) out.push_back(p.log_w_prior);
  return out;
}

void SetPriorLogWeights(std::vector<Particle>* particles, std::vector<double> lw,
                        int step) {
  try {
    NormalizeLogWeights(&lw);
  } catch (const Error&) {
    throw Error(ErrorKind::kFilterFailure,
                fmt::format("every particle lost its prior weight at step {}", step));
  }
  for (std::size_t k = 0; k < particles->size(); ++k) (*particles)[k].log_w_prior = lw[k];
}

}  // namespace

void PriorSpec::Validate(const HybridSystem& system) const {
  if (static_cast<int>(mode_probabilities.size()) != system.num_modes()) {
    throw Error(ErrorKind::kShape, "prior needs one probability per mode");
  }
  double total = 0.0;
  for (int m = 0; m < system.num_modes(); ++m) {
    const double p = mode_probabilities[m];
    if (!(p >= 0.0)) throw Error(ErrorKind::kPrecondition, "mode probabilities must be >= 0");
    total += p;
    if (p == 0.0) continue;
    const int dim = system.modes[m].state_dim;
    if (static_cast<int>(mean.size()) <= m || mean[m].size() != dim ||
        static_cast<int>(cov.size()) <= m || cov[m].rows() != dim ||
        cov[m].cols() != dim) {
      throw Error(ErrorKind::kShape,
                  fmt::format("prior mean/covariance of mode {} must have dimension {}",
                              m, dim));
    }
    if ((cov[m] - cov[m].transpose()).cwiseAbs().maxCoeff() > 1e-10) {
      throw Error(ErrorKind::kPrecondition, "prior covariance must be symmetric");
    }
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kPrecondition, "mode probabilities must sum to 1");
  }
}

HybridState PriorSpec::Sample(Rng& rng) const {
  const double u = rng.Uniform();
  int m = 0;
  double acc = 0.0;
  for (int i = 0; i < static_cast<int>(mode_probabilities.size()); ++i) {
    if (mode_probabilities[i] == 0.0) continue;
    m = i;
    acc += mode_probabilities[i];
    if (u < acc) break;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov[m]);
  const Vector scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Vector z = rng.NormalVector(static_cast<int>(mean[m].size()));
  HybridState s;
  s.mode = ModeId(m);
  s.x = mean[m] + eig.eigenvectors() * scale.cwiseProduct(z);
  return s;
}

void FilterConfig::Validate() const {
  if (K < 1) throw Error(ErrorKind::kPrecondition, "K must be >= 1");
  if (H < 1) throw Error(ErrorKind::kPrecondition, "H must be >= 1");
  if (!(dt > 0.0)) throw Error(ErrorKind::kPrecondition, "dt must be positive");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kPrecondition, "epsilon must be positive");
  if (!(gamma_thres > 0.0 && gamma_thres <= 1.0)) {
    throw Error(ErrorKind::kPrecondition, "gamma_thres must lie in (0, 1]");
  }
  ilqr.Validate();
}

void NormalizeLogWeights(std::vector<double>* log_w) {
  double max = -kInf;
  for (double v : *log_w) {
    if (std::isfinite(v)) max = std::max(max, v);
  }
  if (!std::isfinite(max)) {
    throw Error(ErrorKind::kDegenerateEnsemble, "every weight is zero or non-finite");
  }
  double sum = 0.0;
  for (double& v : *log_w) {
    if (!std::isfinite(v)) v = -kInf;
    sum += std::exp(v - max);
  }
  const double lse = max + std::log(sum);
  for (double& v : *log_w) v -= lse;
}

double EffectiveRatio(std::span<const double> log_w) {
  double sum_sq = 0.0;
  for (double v : log_w) sum_sq += std::exp(2.0 * v);
  return 1.0 / (static_cast<double>(log_w.size()) * sum_sq);
}

std::vector<int> MultinomialResample(std::span<const double> log_w, int count,
                                     Rng& rng) {
  std::vector<double> cdf(log_w.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    acc += std::exp(log_w[k]);
    cdf[k] = acc;
  }
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) {
    const double u = rng.Uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int k = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
    // Never land on a zero-weight entry through rounding at the top end.
    while (k > 0 && !(std::exp(log_w[k]) > 0.0)) --k;
    idx[i] = k;
  }
  return idx;
}

Estimate VoteAndEstimate(const HybridSystem& system,
                         std::span<const HybridState> states,
                         std::span<const double> log_w) {
  if (states.size() != log_w.size() || states.empty()) {
    throw Error(ErrorKind::kShape, "states and weights must align and be non-empty");
  }
  double max = -kInf;
  for (double v : log_w) {
    if (std::isfinite(v)) max = std::max(max, v);
  }
  if (!std::isfinite(max)) {
    throw Error(ErrorKind::kDegenerateEnsemble, "cannot vote without any weight");
  }
  std::vector<double> w(log_w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::isfinite(log_w[k]) ? std::exp(log_w[k] - max) : 0.0;
  }
  std::vector<double> mode_weight(system.num_modes(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) mode_weight[states[k].mode.index] += w[k];
  int best = 0;
  for (int m = 1; m < system.num_modes(); ++m) {
    if (mode_weight[m] > mode_weight[best]) best = m;
  }

  Estimate est;
  est.mode_hat = ModeId(best);
  est.x_hat = Vector::Zero(system.modes[best].state_dim);
  const double total = mode_weight[best];
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (states[k].mode.index != best || w[k] == 0.0) continue;
    const double wk = w[k] / total;
    est.x_hat += wk * states[k].x;
    est.contact += wk * states[k].contact;
  }
  return est;
}

std::vector<Particle> SampleEnsemble(const HybridSystem& system,
                                     const PriorSpec& prior, int count,
                                     std::uint64_t seed) {
  prior.Validate(system);
  std::vector<Particle> particles(count);
  const double lw = -std::log(static_cast<double>(count));
  for (int k = 0; k < count; ++k) {
    Rng rng(seed, StreamTag::kPriorSample, k);
    particles[k].prior = prior.Sample(rng);
    particles[k].current = particles[k].prior;
    particles[k].log_w_prior = lw;
    particles[k].log_w_filtered = lw;
  }
  return particles;
}

void ParticleUpdate(const HybridSystem& system, const GainSchedule& gains,
                    const ReferenceTable& table, const CostEvaluator& eval,
                    Particle* particle, Rng& rng, double* s_total,
                    double* s_first, HybridState* first_state) {
  Rollout r;
  std::vector<double> inc;
  try {
    r = RolloutControlled(system, gains, table, particle->prior, &rng);
    inc = SuIncrements(eval, r.states, r.controls, r.noises, r.modes);
  } catch (const Error& e) {
    if (!Recoverable(e.kind())) throw;
    r.states.clear();
  }
  const double total = std::accumulate(inc.begin(), inc.end(), 0.0);
  if (r.states.empty() || !std::isfinite(total)) {
    particle->dead = true;
    particle->log_w_filtered = -kInf;
    *s_total = kInf;
    *s_first = kInf;
    *first_state = particle->prior;
    return;
  }
  *s_total = total;
  *s_first = inc.front();
  *first_state = HybridState{r.modes[1], r.states[1], eval.time(eval.begin() + 1),
                             r.contact[1]};
  particle->current = HybridState{r.modes.back(), r.states.back(),
                                  eval.time(eval.end()), r.contact.back()};
  particle->trajectory = std::move(r.states);
  particle->mode_history = std::move(r.modes);
  particle->log_w_filtered = particle->log_w_prior - total;
}

RunResult Run(const HybridSystem& system, const MeasurementPath& path,
              const FilterConfig& config, ControlPolicy policy) {
  config.Validate();
  system.Validate();
  if (std::abs(system.noise_scale - config.epsilon) >
      1e-12 * std::max(1.0, config.epsilon)) {
    throw Error(ErrorKind::kPrecondition,
                fmt::format("filter epsilon {} differs from the system noise scale {}",
                            config.epsilon, system.noise_scale));
  }
  const int L = path.steps();
  if (L < 1) throw Error(ErrorKind::kPrecondition, "measurement path is empty");
  if (std::abs(path.dt(0) - config.dt) > 1e-9) {
    throw Error(ErrorKind::kPrecondition,
                fmt::format("measurement grid step {} differs from dt {}",
                            path.dt(0), config.dt));
  }

  RunResult result;
  result.records.reserve(L + 1);
  std::vector<Particle> particles =
      SampleEnsemble(system, config.prior, config.K, config.seed);
  for (Particle& p : particles) p.prior.t = path.times[0];

  {
    const std::vector<HybridState> priors = Priors(particles);
    const std::vector<double> lw = PriorLogWeights(particles);
    const Estimate est = VoteAndEstimate(system, priors, lw);
    EstimateRecord rec{path.times[0], est.x_hat, est.mode_hat, est.contact,
                       EffectiveRatio(lw), {}};
    if (config.record_particles) {
      for (double v : lw) rec.weights.push_back(std::exp(v));
    }
    result.records.push_back(std::move(rec));
  }

  WindowOutcome outcome;
  for (int j = 1; j <= L; ++j) {
    const int i = std::max(0, j - config.H);
    const CostEvaluator eval(system, path, i, j, config.epsilon);

    GainSchedule gains;
    if (policy == ControlPolicy::kZero) {
      gains = BareZeroSchedule(eval);
    } else {
      const std::vector<HybridState> priors = Priors(particles);
      const Estimate init = VoteAndEstimate(system, priors, PriorLogWeights(particles));
      const HybridState x0{init.mode_hat, init.x_hat, path.times[i], init.contact};
      try {
        gains = SolveWindow(system, eval, x0, config.ilqr);
      } catch (const SolverStalled& e) {
        gains = e.best();
        ++result.diagnostics.solver_stalls;
      } catch (const Error& e) {
        if (!Recoverable(e.kind())) throw;
        gains = BareZeroSchedule(eval);
        ++result.diagnostics.solver_fallbacks;
      }
    }
    const ReferenceTable table(system, gains);

    const int dead_before = static_cast<int>(
        std::count_if(particles.begin(), particles.end(),
                      [](const Particle& p) { return p.dead; }));
    UpdateEnsemble(system, gains, table, eval, &particles, config.seed, j,
                   config.execution, &outcome);
    std::vector<double> log_hat(config.K);
    int alive = 0;
    for (int k = 0; k < config.K; ++k) {
      log_hat[k] = particles[k].dead ? -kInf : particles[k].log_w_filtered;
      if (!particles[k].dead) ++alive;
    }
    result.diagnostics.dead_particles += (config.K - alive) - dead_before;
    if (alive == 0) {
      throw Error(ErrorKind::kFilterFailure,
                  fmt::format("every particle diverged at step {}", j));
    }
    NormalizeLogWeights(&log_hat);
    const double gamma = EffectiveRatio(log_hat);

    std::vector<HybridState> current;
    current.reserve(config.K);
    for (const Particle& p : particles) current.push_back(p.current);
    const Estimate est = VoteAndEstimate(system, current, log_hat);
    EstimateRecord rec{path.times[j], est.x_hat, est.mode_hat, est.contact, gamma, {}};
    if (config.record_particles) {
      for (double v : log_hat) rec.weights.push_back(std::exp(v));
    }
    result.records.push_back(std::move(rec));
    if (j == L) break;

    // Prior for the next window.
    const bool advance = std::max(0, j + 1 - config.H) > i;
    std::vector<double> prior_lw(config.K);
    for (int k = 0; k < config.K; ++k) {
      Particle& p = particles[k];
      if (p.dead) {
        prior_lw[k] = -kInf;
        continue;
      }
      if (advance) {
        p.prior = outcome.first_state[k];
        p.prior.t = path.times[i + 1];
        prior_lw[k] = p.log_w_prior - outcome.s_first[k];
      } else {
        prior_lw[k] = p.log_w_prior;
      }
    }
    SetPriorLogWeights(&particles, std::move(prior_lw), j);

    if (config.resampling_enabled && gamma < config.gamma_thres) {
      Rng rng(config.seed, StreamTag::kResample, j);
      const std::vector<int> idx = MultinomialResample(log_hat, config.K, rng);
      std::vector<Particle> next(config.K);
      std::vector<double> lw(config.K);
      for (int k = 0; k < config.K; ++k) {
        const int parent = idx[k];
        next[k].prior = particles[parent].prior;
        next[k].current = particles[parent].current;
        double s = outcome.s_total[parent];
        if (config.reweight == ResampleReweight::kLagCorrected && advance) {
          s -= outcome.s_first[parent];
        }
        lw[k] = s;
      }
      particles = std::move(next);
      SetPriorLogWeights(&particles, std::move(lw), j);
      ++result.diagnostics.resampling_events;
    }
  }
  return result;
}

}  // namespace spipf
