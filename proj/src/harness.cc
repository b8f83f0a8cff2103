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

#include "spipf/harness.h"

#include <bit>
#include <cmath>
#include <exception>
#include <limits>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "spipf/baselines.h"
#include "spipf/csv_io.h"
#include "spipf/error.h"
#include "spipf/measurement.h"
#include "spipf/rng.h"

namespace spipf {
namespace {

constexpr double kModeTolerance = 0.2;  // seconds

double Mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double SampleVariance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

std::string Tag(const std::string& algorithm, SweepParam p, double value) {
  return fmt::format("{}_{}{}", algorithm, SweepParamName(p), FormatDouble(value));
}

void WriteOutputs(const ExperimentConfig& config, const ExperimentResult& result) {
  const std::string dir = config.output_dir;
  EnsureDirectory(dir);
  const std::string param = SweepParamName(config.sweep.param);

  CsvWriter trials(dir + "/trials.csv",
                   {"algorithm", "param", "value", "trial", "status", "mse",
                    "post_mse", "retained", "offset_steps", "truth_transition_index",
                    "path_hash", "resampling_events", "solver_stalls",
                    "solver_fallbacks", "dead_particles", "error"});
  for (const TrialRow& r : result.trials) {
    std::string err = r.error;
    for (char& c : err) {
      if (c == ',' || c == '\n') c = ' ';
    }
    trials.Row({r.algorithm, param, FormatDouble(r.sweep_value), std::to_string(r.trial),
                r.failed ? "failed" : "ok", FormatDouble(r.mse), FormatDouble(r.post_mse),
                r.retained ? "1" : "0",
                r.offset_steps ? std::to_string(*r.offset_steps) : "censored",
                std::to_string(r.truth_transition_index), fmt::format("{:016x}", r.path_hash),
                std::to_string(r.diagnostics.resampling_events),
                std::to_string(r.diagnostics.solver_stalls),
                std::to_string(r.diagnostics.solver_fallbacks),
                std::to_string(r.diagnostics.dead_particles), err});
  }

  CsvWriter summary(dir + "/summary.csv",
                    {"algorithm", "param", "value", "n_trials", "failed", "retained",
                     "mean_mse", "mse_covariance", "post_retained", "post_mean_mse",
                     "post_mse_covariance", "mode_within_0.2s", "censored"});
  for (const MetricsSummary& s : result.summaries) {
    summary.Row({s.algorithm, param, FormatDouble(s.sweep_value), std::to_string(s.n_trials),
                 std::to_string(s.failed), std::to_string(s.retained),
                 FormatDouble(s.mean_mse), FormatDouble(s.mse_covariance),
                 std::to_string(s.post_retained), FormatDouble(s.post_mean_mse),
                 FormatDouble(s.post_mse_covariance), FormatDouble(s.within_tolerance),
                 std::to_string(s.censored)});

    const std::string tag = Tag(s.algorithm, config.sweep.param, s.sweep_value);
    CsvWriter series(dir + "/series_" + tag + ".csv",
                     {"t", "sq_err_mean", "sq_err_var", "esse_mean", "mode_accuracy"});
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      series.Row({FormatDouble(s.times[j]), FormatDouble(s.sq_err_mean[j]),
                  FormatDouble(s.sq_err_var[j]), FormatDouble(s.esse_series[j]),
                  FormatDouble(s.mode_accuracy_series[j])});
    }
    CsvWriter aligned(dir + "/esse_aligned_" + tag + ".csv",
                      {"offset_steps", "offset_s", "esse_mean", "count"});
    for (const auto& [off, v] : s.esse_aligned) {
      aligned.Row({std::to_string(off), FormatDouble(off * s.dt), FormatDouble(v.first),
                   std::to_string(v.second)});
    }
    CsvWriter hist(dir + "/histogram_" + tag + ".csv", {"offset_steps", "offset_s", "count"});
    for (const auto& [off, n] : s.offset_histogram) {
      hist.Row({std::to_string(off), FormatDouble(off * s.dt), std::to_string(n)});
    }
    hist.Row({"censored", "", std::to_string(s.censored)});
  }
}

}  // namespace

std::vector<double> SquaredErrors(const HybridSystem& system,
                                  const std::vector<EstimateRecord>& records,
                                  const std::vector<HybridState>& truth) {
  if (records.size() != truth.size()) {
    throw Error(ErrorKind::kShape,
                fmt::format("{} estimates for {} truth states", records.size(), truth.size()));
  }
  const int n = static_cast<int>(records.size());
  std::vector<double> out(n);
  for (int j = 0; j < n; ++j) {
    const EstimateRecord& r = records[j];
    const HybridState& s = truth[j];
    if (std::abs(r.t - s.t) > 1e-9) {
      throw Error(ErrorKind::kShape, fmt::format("time grids differ at index {}", j));
    }
    if (r.mode_hat == s.mode) {
      out[j] = (r.x_hat - s.x).squaredNorm();
      continue;
    }
    // Whichever side is still in the earlier mode goes through the transition
    // the truth takes nearest to this step.
    int back = -1, ahead = -1;
    for (int q = j - 1; q >= 0; --q) {
      if (truth[q].mode == r.mode_hat) { back = j - q; break; }
    }
    for (int q = j + 1; q < n; ++q) {
      if (truth[q].mode == r.mode_hat) { ahead = q - j; break; }
    }
    const bool estimate_leads = ahead >= 0 && (back < 0 || ahead < back);
    if (estimate_leads) {
      const Transition* tr = system.Find(s.mode, r.mode_hat);
      if (tr != nullptr) {
        const Vector mapped = tr->reset(s.t, s.x, s.contact);
        out[j] = (r.x_hat - mapped).squaredNorm();
        continue;
      }
    }
    const Transition* tr = system.Find(r.mode_hat, s.mode);
    if (tr == nullptr) {
      throw Error(ErrorKind::kModeMismatch,
                  fmt::format("no transition maps mode {} onto mode {}", r.mode_hat.index,
                              s.mode.index));
    }
    out[j] = (tr->reset(r.t, r.x_hat, r.contact) - s.x).squaredNorm();
  }
  return out;
}

double MeanMse(const HybridSystem& system,
               const std::vector<EstimateRecord>& records,
               const std::vector<HybridState>& truth, int first) {
  const std::vector<double> e = SquaredErrors(system, records, truth);
  if (first < 0 || first >= static_cast<int>(e.size())) {
    throw Error(ErrorKind::kRange, "MSE range is empty");
  }
  double s = 0.0;
  for (std::size_t j = first; j < e.size(); ++j) s += e[j];
  return s / static_cast<double>(e.size() - first);
}

int FirstPostTransitionIndex(const TruthRun& truth) {
  return truth.transitions.empty() ? -1 : truth.transitions.front().step + 1;
}

ModeMetrics ComputeModeMetrics(const std::vector<EstimateRecord>& records,
                               const TruthRun& truth) {
  if (records.size() != truth.states.size()) {
    throw Error(ErrorKind::kShape, "estimate and truth grids differ");
  }
  ModeMetrics m;
  m.correct.resize(records.size());
  const ModeId initial = truth.states.front().mode;
  int first_est = -1;
  for (std::size_t j = 0; j < records.size(); ++j) {
    m.correct[j] = records[j].mode_hat == truth.states[j].mode ? 1.0 : 0.0;
    if (first_est < 0 && records[j].mode_hat != initial) first_est = static_cast<int>(j);
  }
  const int first_true = FirstPostTransitionIndex(truth);
  if (first_est >= 0 && first_true >= 0) m.offset_steps = first_est - first_true;
  return m;
}

PairedTTest PairedOneSidedTTest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(ErrorKind::kShape, "paired test needs two equal samples of size >= 2");
  }
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedTTest r;
  r.df = static_cast<int>(d.size()) - 1;
  r.mean_diff = Mean(d);
  const double se = std::sqrt(SampleVariance(d) / static_cast<double>(d.size()));
  if (se == 0.0) {
    r.t = r.mean_diff < 0 ? -std::numeric_limits<double>::infinity()
                          : (r.mean_diff > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.p_value = r.mean_diff < 0 ? 0.0 : 1.0;
    return r;
  }
  r.t = r.mean_diff / se;
  const boost::math::students_t dist(r.df);
  r.p_value = boost::math::cdf(dist, r.t);
  return r;
}

FilterConfig TrialFilterConfig(const FilterConfig& base, int trial) {
  FilterConfig c = base;
  c.seed = SplitMix64(base.seed ^ SplitMix64(static_cast<std::uint64_t>(trial) + 1));
  return c;
}

TruthRun SimulateTrial(const ExperimentConfig& config, const HybridSystem& system,
                       double dt, int trial) {
  const std::uint64_t seed = config.filter.seed;
  const std::uint64_t dt_key = std::bit_cast<std::uint64_t>(dt);
  Rng init(seed, StreamTag::kTruthInit, trial);
  HybridState x0 = config.filter.prior.Sample(init);
  x0.t = 0.0;
  Rng process(seed, StreamTag::kTruthProcess, trial, dt_key);
  Rng measurement(seed, StreamTag::kMeasurement, trial, dt_key);
  return SimulateTruth(system, x0, config.system.horizon, dt, process, measurement);
}

RunResult RunAlgorithm(const std::string& name, const HybridSystem& system,
                       const MeasurementPath& path, const FilterConfig& config) {
  if (name == "spipf") return Run(system, path, config, ControlPolicy::kIlqr);
  if (name == "spipf0") return RunSpipfZeroControl(system, path, config);
  if (name == "sir") return RunSir(system, path, config);
  if (name == "skf") {
    return RunSkf(system, path, PriorBelief(config.prior, path.times.front()));
  }
  throw Error(ErrorKind::kConfig, fmt::format("unknown algorithm '{}'", name));
}

MetricsSummary Summarize(const std::vector<const TrialRow*>& rows,
                         const std::string& algorithm, double sweep_value,
                         double dt, double t0) {
  MetricsSummary s;
  s.algorithm = algorithm;
  s.sweep_value = sweep_value;
  s.dt = dt;
  s.n_trials = static_cast<int>(rows.size());
  std::vector<double> mse, post;
  std::vector<const TrialRow*> kept;
  int with_tolerance = 0;
  for (const TrialRow* r : rows) {
    if (r->failed) {
      ++s.failed;
      continue;
    }
    if (!r->retained) continue;
    kept.push_back(r);
    mse.push_back(r->mse);
    if (std::isfinite(r->post_mse)) post.push_back(r->post_mse);
    if (r->offset_steps) {
      ++s.offset_histogram[*r->offset_steps];
      if (std::abs(*r->offset_steps * dt) <= kModeTolerance + 1e-9) ++with_tolerance;
    } else {
      ++s.censored;
    }
  }
  s.retained = static_cast<int>(kept.size());
  s.mean_mse = Mean(mse);
  s.mse_covariance = SampleVariance(mse);
  s.post_retained = static_cast<int>(post.size());
  s.post_mean_mse = Mean(post);
  s.post_mse_covariance = SampleVariance(post);
  s.within_tolerance =
      kept.empty() ? 0.0 : static_cast<double>(with_tolerance) / static_cast<double>(kept.size());
  if (kept.empty()) return s;

  const std::size_t n = kept.front()->sq_err.size();
  s.times.resize(n);
  s.sq_err_mean.assign(n, 0.0);
  s.sq_err_var.assign(n, 0.0);
  s.esse_series.assign(n, 0.0);
  s.mode_accuracy_series.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    s.times[j] = t0 + static_cast<double>(j) * dt;
    std::vector<double> e;
    for (const TrialRow* r : kept) {
      e.push_back(r->sq_err[j]);
      s.esse_series[j] += r->esse[j];
      s.mode_accuracy_series[j] += r->correct[j];
    }
    s.sq_err_mean[j] = Mean(e);
    s.sq_err_var[j] = SampleVariance(e);
    s.esse_series[j] /= static_cast<double>(kept.size());
    s.mode_accuracy_series[j] /= static_cast<double>(kept.size());
  }
  std::map<int, std::pair<double, int>> acc;
  for (const TrialRow* r : kept) {
    if (r->truth_transition_index < 0) continue;
    for (std::size_t j = 0; j < r->esse.size(); ++j) {
      auto& cell = acc[static_cast<int>(j) - r->truth_transition_index];
      cell.first += r->esse[j];
      ++cell.second;
    }
  }
  for (auto& [off, cell] : acc) cell.first /= cell.second;
  s.esse_aligned = std::move(acc);
  return s;
}

ExperimentResult RunExperiment(const ExperimentConfig& config,
                               const ExperimentOptions& options) {
  config.Validate();
  const int n_values = static_cast<int>(config.sweep.values.size());
  const int n_algos = static_cast<int>(config.algorithms.size());
  const int n_trials = config.n_trials;
  std::vector<TrialRow> rows(static_cast<std::size_t>(n_trials) * n_values * n_algos);
  auto slot = [&](int trial, int v, int a) -> TrialRow& {
    return rows[(static_cast<std::size_t>(v) * n_algos + a) * n_trials + trial];
  };
  std::vector<std::exception_ptr> fatal(n_trials);
  const HybridSystem system = BuildSystem(config.system, config.filter.epsilon);
  const std::string param = SweepParamName(config.sweep.param);
  if (options.write_outputs) EnsureDirectory(config.output_dir);

#pragma omp parallel for schedule(dynamic)
  for (int trial = 0; trial < n_trials; ++trial) {
    try {
      for (int v = 0; v < n_values; ++v) {
        const double value = config.sweep.values[v];
        FilterConfig fc = TrialFilterConfig(
            ApplySweep(config.filter, config.sweep.param, value), trial);
        fc.execution = Execution::kSerial;
        std::optional<TruthRun> truth;
        std::string truth_error;
        try {
          truth = SimulateTrial(config, system, fc.dt, trial);
        } catch (const Error& e) {
          truth_error = fmt::format("{}: {}", ErrorKindName(e.kind()), e.what());
        }
        const bool write_this =
            options.write_outputs &&
            (config.write_estimates == "all" ||
             (config.write_estimates == "first" && trial == 0));
        if (truth && write_this) {
          const std::string base = fmt::format("{}/{}{}_trial{}", config.output_dir, param,
                                               FormatDouble(value), trial);
          WriteTruthCsv(base + "_truth.csv", *truth);
          WriteTransitionsCsv(base + "_transitions.csv", *truth);
          WriteMeasurementsCsv(base + "_measurements.csv", truth->measurements);
        }
        const std::uint64_t hash = truth ? ContentHash(truth->measurements) : 0;
        for (int a = 0; a < n_algos; ++a) {
          TrialRow& row = slot(trial, v, a);
          row.algorithm = config.algorithms[a];
          row.sweep_value = value;
          row.trial = trial;
          if (!truth) {
            row.failed = true;
            row.error = truth_error;
            continue;
          }
          row.truth_transition_index = FirstPostTransitionIndex(*truth);
          try {
            const RunResult res = RunAlgorithm(row.algorithm, system, truth->measurements, fc);
            row.path_hash = ContentHash(truth->measurements);
            if (row.path_hash != hash) {
              throw Error(ErrorKind::kExperiment, "measurement path changed during a trial");
            }
            row.diagnostics = res.diagnostics;
            row.sq_err = SquaredErrors(system, res.records, truth->states);
            row.mse = Mean(row.sq_err);
            const int first = row.truth_transition_index;
            row.post_mse = first >= 0 && first < static_cast<int>(row.sq_err.size())
                               ? MeanMse(system, res.records, truth->states, first)
                               : std::numeric_limits<double>::quiet_NaN();
            const ModeMetrics mm = ComputeModeMetrics(res.records, *truth);
            row.correct = mm.correct;
            row.offset_steps = mm.offset_steps;
            for (const EstimateRecord& r : res.records) row.esse.push_back(r.esse);
            row.retained = !config.mse_threshold || row.mse <= *config.mse_threshold;
            if (!std::isfinite(row.mse)) row.retained = false;
            if (write_this) {
              WriteEstimatesCsv(fmt::format("{}/estimates_{}_trial{}.csv", config.output_dir,
                                            Tag(row.algorithm, config.sweep.param, value),
                                            trial),
                                res.records);
            }
          } catch (const Error& e) {
            if (e.kind() == ErrorKind::kExperiment || e.kind() == ErrorKind::kIo) throw;
            row.failed = true;
            row.error = fmt::format("{}: {}", ErrorKindName(e.kind()), e.what());
          }
        }
      }
    } catch (...) {
      fatal[trial] = std::current_exception();
    }
  }
  for (const auto& e : fatal) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentResult result;
  result.trials = rows;
  std::string overload;
  for (int v = 0; v < n_values; ++v) {
    const double value = config.sweep.values[v];
    const double dt = ApplySweep(config.filter, config.sweep.param, value).dt;
    for (int a = 0; a < n_algos; ++a) {
      std::vector<const TrialRow*> subset;
      for (int trial = 0; trial < n_trials; ++trial) subset.push_back(&slot(trial, v, a));
      MetricsSummary s = Summarize(subset, config.algorithms[a], value, dt, 0.0);
      if (2 * s.failed > s.n_trials && overload.empty()) {
        overload = fmt::format("{} of {} trials failed for {} at {}={}", s.failed,
                               s.n_trials, s.algorithm, param, FormatDouble(value));
      }
      result.summaries.push_back(std::move(s));
    }
  }
  if (options.write_outputs) WriteOutputs(config, result);
  if (!overload.empty()) throw Error(ErrorKind::kExperiment, overload);
  return result;
}

}  // namespace spipf
