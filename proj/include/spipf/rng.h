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

#ifndef SPIPF_RNG_H_
#define SPIPF_RNG_H_

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace spipf {

// Purpose tags mixed into stream keys so that unrelated consumers of one
// seed never share draws.
enum class StreamTag : std::uint64_t {
  kTruthInit = 1,
  kTruthProcess = 2,
  kMeasurement = 3,
  kPriorSample = 4,
  kParticleNoise = 5,
  kResample = 6,
  kSirNoise = 7,
  kSirResample = 8,
  kTrial = 9,
};

std::uint64_t SplitMix64(std::uint64_t x);

// Counter-based stream derivation: the generator for a key depends only on
// the key, never on how many other streams were drawn before it. This is
// what keeps parallel particle updates bit-identical to the serial loop.
class Rng {
 public:
  Rng(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
      std::uint64_t b = 0);

  double Normal() { return normal_(engine_); }
  double Uniform() { return uniform_(engine_); }

  // Standard normal vector scaled by `scale` (e.g. sqrt(dt) for a Wiener
  // increment).
  Eigen::VectorXd NormalVector(int n, double scale = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace spipf

#endif  // SPIPF_RNG_H_
