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

// Experiment configuration files: INI-style `key = value` lines grouped in
// [system], [prior], [filter], [sweep], [experiment] and optional [ilqr]
// sections. Lists are whitespace separated. See configs/ for examples.

#ifndef SPIPF_CONFIG_H_
#define SPIPF_CONFIG_H_

#include <optional>
#include <string>
#include <vector>

#include "spipf/hybrid_system.h"
#include "spipf/particle_filter.h"
#include "spipf/systems.h"

namespace spipf {

struct SystemSpec {
  std::string name = "bouncing_ball";  // bouncing_ball | slip | linear
  BouncingBallParams ball;
  SlipParams slip;
  LinearScalarParams linear;
  double obs_sigma = 0.1;
  double horizon = 0.8;
};

// Builds the named system with noise scale `epsilon`.
HybridSystem BuildSystem(const SystemSpec& spec, double epsilon);

enum class SweepParam { kK, kH, kDt };

struct SweepSpec {
  SweepParam param = SweepParam::kK;
  std::vector<double> values;
};

std::string SweepParamName(SweepParam p);

// Copy of `base` with the sweep parameter set to `value`.
FilterConfig ApplySweep(const FilterConfig& base, SweepParam param, double value);

struct ExperimentConfig {
  SystemSpec system;
  FilterConfig filter;
  SweepSpec sweep;
  int n_trials = 50;
  std::optional<double> mse_threshold;
  std::vector<std::string> algorithms = {"spipf", "spipf0", "sir"};
  std::string output_dir = "out";
  // Estimate CSVs per (algorithm, sweep value): "first" trial, "all", "none".
  std::string write_estimates = "first";

  void Validate() const;
};

ExperimentConfig ParseConfig(const std::string& text);
ExperimentConfig LoadConfig(const std::string& path);

}  // namespace spipf

#endif  // SPIPF_CONFIG_H_
