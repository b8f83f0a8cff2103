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

#include "spipf/config.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "spipf/error.h"

namespace spipf {
namespace {

namespace pt = boost::property_tree;

const std::set<std::string> kAlgorithms = {"spipf", "spipf0", "sir", "skf"};

// Wraps the parsed tree and rejects keys nobody asked for, so that typos in a
// config file fail loudly instead of silently falling back to defaults.
class Reader {
 public:
  explicit Reader(pt::ptree tree) : tree_(std::move(tree)) {}

  bool Has(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(section);
    return sec && sec->find(key) != sec->not_found();
  }

  std::optional<std::string> Raw(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto it = sec->find(key);
    if (it == sec->not_found()) return std::nullopt;
    return it->second.data();
  }

  double Double(const std::string& section, const std::string& key, double fallback) {
    const auto raw = Raw(section, key);
    return raw ? ParseDouble(section, key, *raw) : fallback;
  }

  int Int(const std::string& section, const std::string& key, int fallback) {
    const double v = Double(section, key, fallback);
    if (v != std::floor(v)) {
      throw Error(ErrorKind::kConfig, fmt::format("[{}] {} must be an integer", section, key));
    }
    return static_cast<int>(v);
  }

  bool Bool(const std::string& section, const std::string& key, bool fallback) {
    const auto raw = Raw(section, key);
    if (!raw) return fallback;
    if (*raw == "true" || *raw == "1" || *raw == "yes") return true;
    if (*raw == "false" || *raw == "0" || *raw == "no") return false;
    throw Error(ErrorKind::kConfig,
                fmt::format("[{}] {} must be true or false, got '{}'", section, key, *raw));
  }

  std::string String(const std::string& section, const std::string& key,
                     const std::string& fallback) {
    return Raw(section, key).value_or(fallback);
  }

  std::vector<std::string> Words(const std::string& section, const std::string& key) {
    std::vector<std::string> out;
    const auto raw = Raw(section, key);
    if (!raw) return out;
    std::istringstream in(*raw);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  }

  std::vector<double> Doubles(const std::string& section, const std::string& key) {
    std::vector<double> out;
    for (const std::string& w : Words(section, key)) out.push_back(ParseDouble(section, key, w));
    return out;
  }

  void RejectUnused() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) {
        throw Error(ErrorKind::kConfig,
                    fmt::format("key '{}' appears outside any section", section));
      }
      for (const auto& [key, value] : body) {
        if (!used_.count(section + "." + key)) {
          throw Error(ErrorKind::kConfig, fmt::format("unknown key [{}] {}", section, key));
        }
      }
    }
  }

 private:
  static double ParseDouble(const std::string& section, const std::string& key,
                            const std::string& text) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(text, &pos);
      if (pos != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig,
                  fmt::format("[{}] {}: '{}' is not a number", section, key, text));
    }
  }

  pt::ptree tree_;
  std::set<std::string> used_;
};

// Strips '#' and ';' comments, which the INI reader only accepts at line
// start.
std::string StripComments(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  for (std::string line; std::getline(in, line);) {
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.erase(cut);
    out << line << '\n';
  }
  return out.str();
}

Vector ToVector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

HybridSystem BuildSystem(const SystemSpec& spec, double epsilon) {
  if (spec.name == "bouncing_ball") {
    BouncingBallParams p = spec.ball;
    p.obs_sigma = spec.obs_sigma;
    p.epsilon = epsilon;
    return BouncingBall(p);
  }
  if (spec.name == "slip") {
    SlipParams p = spec.slip;
    p.obs_sigma = spec.obs_sigma;
    p.epsilon = epsilon;
    return Slip(p);
  }
  if (spec.name == "linear") {
    LinearScalarParams p = spec.linear;
    p.obs_sigma = spec.obs_sigma;
    p.epsilon = epsilon;
    return LinearScalar(p);
  }
  throw Error(ErrorKind::kConfig, fmt::format("unknown system '{}'", spec.name));
}

std::string SweepParamName(SweepParam p) {
  switch (p) {
    case SweepParam::kK: return "K";
    case SweepParam::kH: return "H";
    case SweepParam::kDt: return "dt";
  }
  return "?";
}

FilterConfig ApplySweep(const FilterConfig& base, SweepParam param, double value) {
  FilterConfig c = base;
  switch (param) {
    case SweepParam::kK: c.K = static_cast<int>(std::lround(value)); break;
    case SweepParam::kH: c.H = static_cast<int>(std::lround(value)); break;
    case SweepParam::kDt: c.dt = value; break;
  }
  return c;
}

void ExperimentConfig::Validate() const {
  if (n_trials < 1) throw Error(ErrorKind::kConfig, "n_trials must be >= 1");
  if (sweep.values.empty()) throw Error(ErrorKind::kConfig, "sweep list is empty");
  if (algorithms.empty()) throw Error(ErrorKind::kConfig, "no algorithms selected");
  for (const std::string& a : algorithms) {
    if (!kAlgorithms.count(a)) {
      throw Error(ErrorKind::kConfig, fmt::format("unknown algorithm '{}'", a));
    }
  }
  if (!(system.horizon > 0.0)) throw Error(ErrorKind::kConfig, "horizon must be positive");
  if (write_estimates != "first" && write_estimates != "all" &&
      write_estimates != "none") {
    throw Error(ErrorKind::kConfig, "write_estimates must be first, all or none");
  }
  for (double v : sweep.values) {
    try {
      ApplySweep(filter, sweep.param, v).Validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, fmt::format("sweep value {}: {}", v, e.what()));
    }
  }
  const HybridSystem sys = BuildSystem(system, filter.epsilon);
  try {
    filter.prior.Validate(sys);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, fmt::format("[prior] {}", e.what()));
  }
}

ExperimentConfig ParseConfig(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(StripComments(text));
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
  Reader r(std::move(tree));
  ExperimentConfig c;

  SystemSpec& s = c.system;
  s.name = r.String("system", "name", s.name);
  s.horizon = r.Double("system", "horizon", s.horizon);
  s.obs_sigma = r.Double("system", "obs_sigma", s.obs_sigma);
  if (s.name == "bouncing_ball") {
    s.ball.m = r.Double("system", "m", s.ball.m);
    s.ball.g = r.Double("system", "g", s.ball.g);
    s.ball.e = r.Double("system", "e", s.ball.e);
  } else if (s.name == "slip") {
    s.slip.m = r.Double("system", "m", s.slip.m);
    s.slip.k = r.Double("system", "k", s.slip.k);
    s.slip.r0 = r.Double("system", "r0", s.slip.r0);
    s.slip.g = r.Double("system", "g", s.slip.g);
    s.slip.coriolis = r.Double("system", "coriolis", s.slip.coriolis);
  } else if (s.name == "linear") {
    s.linear.a = r.Double("system", "a", s.linear.a);
    s.linear.s = r.Double("system", "s", s.linear.s);
  } else {
    throw Error(ErrorKind::kConfig, fmt::format("unknown system '{}'", s.name));
  }

  FilterConfig& f = c.filter;
  f.K = r.Int("filter", "K", f.K);
  f.H = r.Int("filter", "H", f.H);
  f.dt = r.Double("filter", "dt", f.dt);
  f.epsilon = r.Double("filter", "epsilon", f.epsilon);
  f.gamma_thres = r.Double("filter", "gamma_thres", f.gamma_thres);
  f.resampling_enabled = r.Bool("filter", "resampling_enabled", f.resampling_enabled);
  const std::string seed = r.String("filter", "seed", "0");
  try {
    std::size_t pos = 0;
    f.seed = std::stoull(seed, &pos);
    if (pos != seed.size()) throw std::invalid_argument(seed);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, fmt::format("[filter] seed '{}' is not an unsigned integer", seed));
  }
  f.record_particles = r.Bool("filter", "record_particles", f.record_particles);
  const std::string reweight = r.String("filter", "reweight", "as_written");
  if (reweight == "as_written") {
    f.reweight = ResampleReweight::kAsWritten;
  } else if (reweight == "lag_corrected") {
    f.reweight = ResampleReweight::kLagCorrected;
  } else {
    throw Error(ErrorKind::kConfig, "reweight must be as_written or lag_corrected");
  }
  const std::string execution = r.String("filter", "execution", "serial");
  if (execution == "serial") {
    f.execution = Execution::kSerial;
  } else if (execution == "parallel") {
    f.execution = Execution::kParallel;
  } else {
    throw Error(ErrorKind::kConfig, "execution must be serial or parallel");
  }

  f.ilqr.max_iters = r.Int("ilqr", "max_iters", f.ilqr.max_iters);
  f.ilqr.cost_tol = r.Double("ilqr", "cost_tol", f.ilqr.cost_tol);
  f.ilqr.reg_init = r.Double("ilqr", "reg_init", f.ilqr.reg_init);
  f.ilqr.reg_max = r.Double("ilqr", "reg_max", f.ilqr.reg_max);

  const HybridSystem sys = BuildSystem(s, f.epsilon);
  f.prior.mode_probabilities = r.Doubles("prior", "probabilities");
  if (f.prior.mode_probabilities.empty()) {
    f.prior.mode_probabilities.assign(sys.num_modes(), 0.0);
    f.prior.mode_probabilities[0] = 1.0;
  }
  f.prior.mean.resize(sys.num_modes());
  f.prior.cov.resize(sys.num_modes());
  for (int m = 0; m < sys.num_modes(); ++m) {
    const std::string mean_key = fmt::format("mean{}", m);
    const std::string std_key = fmt::format("std{}", m);
    const std::string cov_key = fmt::format("cov{}", m);
    const std::vector<double> mean = r.Doubles("prior", mean_key);
    const std::vector<double> sd = r.Doubles("prior", std_key);
    const std::vector<double> cov = r.Doubles("prior", cov_key);
    if (mean.empty()) continue;
    const int dim = static_cast<int>(mean.size());
    f.prior.mean[m] = ToVector(mean);
    if (!cov.empty()) {
      if (static_cast<int>(cov.size()) != dim * dim) {
        throw Error(ErrorKind::kConfig, fmt::format("[prior] {} needs {} entries", cov_key, dim * dim));
      }
      f.prior.cov[m] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                      Eigen::RowMajor>>(cov.data(), dim, dim);
    } else {
      if (static_cast<int>(sd.size()) != dim) {
        throw Error(ErrorKind::kConfig, fmt::format("[prior] {} needs {} entries", std_key, dim));
      }
      f.prior.cov[m] = ToVector(sd).cwiseAbs2().asDiagonal();
    }
  }

  int sweeps = 0;
  for (SweepParam p : {SweepParam::kK, SweepParam::kH, SweepParam::kDt}) {
    const std::vector<double> values = r.Doubles("sweep", SweepParamName(p));
    if (values.empty()) {
      if (r.Has("sweep", SweepParamName(p))) {
        throw Error(ErrorKind::kConfig,
                    fmt::format("[sweep] {} list is empty", SweepParamName(p)));
      }
      continue;
    }
    ++sweeps;
    c.sweep.param = p;
    c.sweep.values = values;
  }
  if (sweeps > 1) throw Error(ErrorKind::kConfig, "[sweep] must list exactly one of K, H, dt");
  if (sweeps == 0) {
    c.sweep.param = SweepParam::kK;
    c.sweep.values = {static_cast<double>(f.K)};
  }

  c.n_trials = r.Int("experiment", "n_trials", c.n_trials);
  if (r.Has("experiment", "mse_threshold")) {
    c.mse_threshold = r.Double("experiment", "mse_threshold", 0.0);
  } else {
    r.Raw("experiment", "mse_threshold");
  }
  const std::vector<std::string> algos = r.Words("experiment", "algorithms");
  if (!algos.empty()) c.algorithms = algos;
  c.output_dir = r.String("experiment", "output_dir", c.output_dir);
  c.write_estimates = r.String("experiment", "write_estimates", c.write_estimates);

  r.RejectUnused();
  c.Validate();
  return c;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open config '{}'", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseConfig(buf.str());
}

}  // namespace spipf
