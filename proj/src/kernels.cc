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

#include "spipf/kernels.h"

#include <cmath>
#include <exception>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "spipf/error.h"
#include "spipf/rng.h"

namespace spipf {
namespace {

bool Recoverable(ErrorKind kind) {
  return kind == ErrorKind::kNumericalDivergence ||
         kind == ErrorKind::kMultipleGuards ||
         kind == ErrorKind::kSingularConfiguration ||
         kind == ErrorKind::kModeMismatch;
}

void UpdateOne(const HybridSystem& system, const GainSchedule& gains,
               const ReferenceTable& table, const CostEvaluator& eval,
               std::vector<Particle>& particles, std::uint64_t seed, int window,
               WindowOutcome* out, int k) {
  Particle& p = particles[k];
  if (p.dead) {
    out->s_total[k] = std::numeric_limits<double>::infinity();
    out->s_first[k] = std::numeric_limits<double>::infinity();
    out->first_state[k] = p.prior;
    return;
  }
  Rng rng(seed, StreamTag::kParticleNoise, k, window);
  ParticleUpdate(system, gains, table, eval, &p, rng, &out->s_total[k],
                 &out->s_first[k], &out->first_state[k]);
}

void StepOne(const HybridSystem& system, std::vector<HybridState>& states,
             std::vector<char>& alive, double dt, std::uint64_t seed, int step,
             int k) {
  if (!alive[k]) return;
  HybridState& s = states[k];
  Rng rng(seed, StreamTag::kSirNoise, k, step);
  const ModeDynamics& mode = system.mode(s.mode);
  try {
    StepResult r = Step(system, s, Vector(), dt,
                        rng.NormalVector(mode.noise_dim, std::sqrt(dt)));
    s = std::move(r.state);
  } catch (const Error& e) {
    if (!Recoverable(e.kind())) throw;
    alive[k] = 0;
  }
}

// Runs body(k) for k in [0, n), serially or with OpenMP. Exceptions are
// captured per index and the lowest-index one rethrown, so failures surface
// the same way under either schedule.
template <typename Body>
void ForEach(int n, Execution execution, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  if (execution == Execution::kSerial) {
    for (int k = 0; k < n; ++k) {
      try {
        body(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < n; ++k) {
      try {
        body(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void UpdateEnsemble(const HybridSystem& system, const GainSchedule& gains,
                    const ReferenceTable& table, const CostEvaluator& eval,
                    std::vector<Particle>* particles, std::uint64_t seed,
                    int window, Execution execution, WindowOutcome* out) {
  const int n = static_cast<int>(particles->size());
  out->s_total.assign(n, 0.0);
  out->s_first.assign(n, 0.0);
  out->first_state.assign(n, HybridState{});
  ForEach(n, execution, [&](int k) {
    UpdateOne(system, gains, table, eval, *particles, seed, window, out, k);
  });
}

void PropagateUncontrolled(const HybridSystem& system,
                           std::vector<HybridState>* states,
                           std::vector<char>* alive, double dt,
                           std::uint64_t seed, int step, Execution execution) {
  const int n = static_cast<int>(states->size());
  ForEach(n, execution, [&](int k) {
    StepOne(system, *states, *alive, dt, seed, step, k);
  });
}

int KernelThreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace spipf
