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

#include "spipf/rng.h"

namespace spipf {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, StreamTag tag, std::uint64_t a, std::uint64_t b) {
  std::uint64_t key = SplitMix64(seed);
  key = SplitMix64(key ^ static_cast<std::uint64_t>(tag));
  key = SplitMix64(key ^ a);
  key = SplitMix64(key ^ (b * 0x2545f4914f6cdd1dULL));
  engine_.seed(key);
}

Eigen::VectorXd Rng::NormalVector(int n, double scale) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * normal_(engine_);
  return v;
}

}  // namespace spipf
