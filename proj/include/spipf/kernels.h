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

// Per-particle kernels with a serial reference loop and an OpenMP loop. Both
// draw noise from streams keyed by particle index, so their outputs are
// bit-identical.

#ifndef SPIPF_KERNELS_H_
#define SPIPF_KERNELS_H_

#include <cstdint>
#include <vector>

#include "spipf/hybrid_system.h"
#include "spipf/ilqr.h"
#include "spipf/measurement.h"
#include "spipf/particle_filter.h"

namespace spipf {

struct WindowOutcome {
  std::vector<double> s_total;
  std::vector<double> s_first;
  std::vector<HybridState> first_state;
};

// ParticleUpdate for every live particle. Noise for particle k comes from
// Rng(seed, kParticleNoise, k, window).
void UpdateEnsemble(const HybridSystem& system, const GainSchedule& gains,
                    const ReferenceTable& table, const CostEvaluator& eval,
                    std::vector<Particle>* particles, std::uint64_t seed,
                    int window, Execution execution, WindowOutcome* out);

// One uncontrolled noisy step for every live state. Noise for particle k comes
// from Rng(seed, kSirNoise, k, step). Failed steps clear alive[k].
void PropagateUncontrolled(const HybridSystem& system,
                           std::vector<HybridState>* states,
                           std::vector<char>* alive, double dt,
                           std::uint64_t seed, int step, Execution execution);

// Number of OpenMP threads available to the parallel kernels (1 without
// OpenMP).
int KernelThreads();

}  // namespace spipf

#endif  // SPIPF_KERNELS_H_
