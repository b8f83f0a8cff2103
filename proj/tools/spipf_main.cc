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

// Command-line front end:
//   spipf simulate <config>    truth trajectory and measurements for one trial
//   spipf filter <config>      one trial of one algorithm
//   spipf experiment <config>  full Monte-Carlo sweep
// Failures print `error: kind=<kind> message="<text>"` on stderr.

#include <cstdio>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "spipf/config.h"
#include "spipf/csv_io.h"
#include "spipf/error.h"
#include "spipf/harness.h"

namespace {

using spipf::ExperimentConfig;

std::string Escape(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

double FirstDt(const ExperimentConfig& c) {
  if (c.sweep.param == spipf::SweepParam::kDt) return c.sweep.values.front();
  return c.filter.dt;
}

int Simulate(ExperimentConfig config, int trial) {
  const double dt = FirstDt(config);
  const spipf::HybridSystem system = spipf::BuildSystem(config.system, config.filter.epsilon);
  const spipf::TruthRun truth = spipf::SimulateTrial(config, system, dt, trial);
  spipf::EnsureDirectory(config.output_dir);
  spipf::WriteTruthCsv(config.output_dir + "/truth.csv", truth);
  spipf::WriteTransitionsCsv(config.output_dir + "/transitions.csv", truth);
  spipf::WriteMeasurementsCsv(config.output_dir + "/measurements.csv", truth.measurements);
  fmt::print("simulated {} steps, {} transition(s), measurement hash {:016x}\n",
             truth.states.size() - 1, truth.transitions.size(),
             spipf::ContentHash(truth.measurements));
  return 0;
}

int Filter(ExperimentConfig config, int trial, const std::string& algorithm) {
  spipf::FilterConfig fc = config.filter;
  if (!config.sweep.values.empty()) {
    fc = spipf::ApplySweep(fc, config.sweep.param, config.sweep.values.front());
  }
  fc = spipf::TrialFilterConfig(fc, trial);
  const spipf::HybridSystem system = spipf::BuildSystem(config.system, fc.epsilon);
  const spipf::TruthRun truth = spipf::SimulateTrial(config, system, fc.dt, trial);
  const spipf::RunResult result =
      spipf::RunAlgorithm(algorithm, system, truth.measurements, fc);
  spipf::EnsureDirectory(config.output_dir);
  spipf::WriteTruthCsv(config.output_dir + "/truth.csv", truth);
  spipf::WriteTransitionsCsv(config.output_dir + "/transitions.csv", truth);
  spipf::WriteMeasurementsCsv(config.output_dir + "/measurements.csv", truth.measurements);
  spipf::WriteEstimatesCsv(config.output_dir + "/estimates_" + algorithm + ".csv",
                           result.records);
  const int first = spipf::FirstPostTransitionIndex(truth);
  fmt::print("algorithm {} mse {}", algorithm,
             spipf::MeanMse(system, result.records, truth.states));
  if (first >= 0 && first < static_cast<int>(truth.states.size())) {
    fmt::print(" post_transition_mse {}",
               spipf::MeanMse(system, result.records, truth.states, first));
  }
  fmt::print(" resampling_events {} solver_stalls {} dead_particles {}\n",
             result.diagnostics.resampling_events, result.diagnostics.solver_stalls,
             result.diagnostics.dead_particles);
  return 0;
}

int Experiment(const ExperimentConfig& config) {
  const spipf::ExperimentResult r = spipf::RunExperiment(config);
  fmt::print("{:<8} {:>8} {:>8} {:>8} {:>14} {:>14} {:>14}\n", "algo",
             spipf::SweepParamName(config.sweep.param), "retained", "failed", "mean_mse",
             "post_mean_mse", "mode<=0.2s");
  for (const spipf::MetricsSummary& s : r.summaries) {
    fmt::print("{:<8} {:>8} {:>8} {:>8} {:>14.6g} {:>14.6g} {:>14.3f}\n", s.algorithm,
               spipf::FormatDouble(s.sweep_value), s.retained, s.failed, s.mean_mse,
               s.post_mean_mse, s.within_tolerance);
  }
  fmt::print("outputs written to {}\n", config.output_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Salted path integral particle filter toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::string output_dir;
  std::string algorithm = "spipf";
  int trial = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "Experiment config file")->required();
    cmd->add_option("--output-dir", output_dir, "Override [experiment] output_dir");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Simulate ground truth and measurements");
  add_common(simulate);
  simulate->add_option("--trial", trial, "Trial index")->check(CLI::NonNegativeNumber);
  CLI::App* filter = app.add_subcommand("filter", "Run one algorithm on one trial");
  add_common(filter);
  filter->add_option("--trial", trial, "Trial index")->check(CLI::NonNegativeNumber);
  filter->add_option("--algorithm", algorithm, "spipf | spipf0 | sir | skf")
      ->check(CLI::IsMember({"spipf", "spipf0", "sir", "skf"}));
  CLI::App* experiment = app.add_subcommand("experiment", "Run the full sweep");
  add_common(experiment);

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig config = spipf::LoadConfig(config_path);
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (simulate->parsed()) return Simulate(config, trial);
    if (filter->parsed()) return Filter(config, trial, algorithm);
    return Experiment(config);
  } catch (const spipf::Error& e) {
    std::fprintf(stderr, "error: kind=%s message=\"%s\"\n",
                 std::string(spipf::ErrorKindName(e.kind())).c_str(),
                 Escape(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: kind=internal message=\"%s\"\n", Escape(e.what()).c_str());
    return 3;
  }
}
