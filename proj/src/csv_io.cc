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

#include "spipf/csv_io.h"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include <fmt/format.h>

#include "spipf/error.h"

namespace spipf {
namespace {

std::string Join(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) line += ',';
    line += fields[i];
  }
  return line;
}

int MaxDim(const std::vector<Vector>& v) {
  int d = 0;
  for (const Vector& x : v) d = std::max(d, static_cast<int>(x.size()));
  return d;
}

// Pads shorter (lower-dimensional mode) states with empty cells.
void AppendState(std::vector<std::string>* row, const Vector& x, int width) {
  for (int i = 0; i < width; ++i) {
    row->push_back(i < x.size() ? FormatDouble(x[i]) : std::string());
  }
}

}  // namespace

std::string FormatDouble(double v) { return fmt::format("{}", v); }

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : path_(path), out_(path), columns_(header.size()) {
  if (!out_) throw Error(ErrorKind::kIo, fmt::format("cannot write '{}'", path));
  out_ << Join(header) << '\n';
}

void CsvWriter::Row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) {
    throw Error(ErrorKind::kShape,
                fmt::format("row of {} fields for {} columns in '{}'", fields.size(),
                            columns_, path_));
  }
  out_ << Join(fields) << '\n';
  if (!out_) throw Error(ErrorKind::kIo, fmt::format("write to '{}' failed", path_));
}

int CsvTable::Column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw Error(ErrorKind::kIo, fmt::format("missing CSV column '{}'", name));
  }
  return static_cast<int>(it - header.begin());
}

CsvTable ReadCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open '{}'", path));
  CsvTable table;
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  std::string line;
  if (std::getline(in, line)) table.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) table.rows.push_back(split(line));
  }
  return table;
}

void WriteTruthCsv(const std::string& path, const TruthRun& truth) {
  std::vector<Vector> xs;
  for (const HybridState& s : truth.states) xs.push_back(s.x);
  const int width = MaxDim(xs);
  std::vector<std::string> header = {"t", "mode"};
  for (int i = 0; i < width; ++i) header.push_back(fmt::format("x{}", i + 1));
  CsvWriter w(path, header);
  for (const HybridState& s : truth.states) {
    std::vector<std::string> row = {FormatDouble(s.t), std::to_string(s.mode.index)};
    AppendState(&row, s.x, width);
    w.Row(row);
  }
}

void WriteTransitionsCsv(const std::string& path, const TruthRun& truth) {
  CsvWriter w(path, {"step", "from", "to"});
  for (const TransitionRecord& t : truth.transitions) {
    w.Row({std::to_string(t.step), std::to_string(t.from.index),
           std::to_string(t.to.index)});
  }
}

void WriteMeasurementsCsv(const std::string& path, const MeasurementPath& m) {
  const int p = MaxDim(m.dY);
  std::vector<std::string> header = {"t"};
  for (int i = 0; i < p; ++i) header.push_back(fmt::format("dY{}", i + 1));
  header.push_back("true_mode");
  CsvWriter w(path, header);
  for (int i = 0; i < m.steps(); ++i) {
    std::vector<std::string> row = {FormatDouble(m.times[i])};
    AppendState(&row, m.dY[i], p);
    row.push_back(std::to_string(m.mode_labels[i].index));
    w.Row(row);
  }
}

void WriteEstimatesCsv(const std::string& path,
                       const std::vector<EstimateRecord>& records) {
  std::vector<Vector> xs;
  std::size_t n_weights = 0;
  for (const EstimateRecord& r : records) {
    xs.push_back(r.x_hat);
    n_weights = std::max(n_weights, r.weights.size());
  }
  const int width = MaxDim(xs);
  std::vector<std::string> header = {"t", "mode_hat"};
  for (int i = 0; i < width; ++i) header.push_back(fmt::format("x_hat{}", i + 1));
  header.push_back("esse");
  for (std::size_t k = 0; k < n_weights; ++k) header.push_back(fmt::format("w{}", k + 1));
  CsvWriter w(path, header);
  for (const EstimateRecord& r : records) {
    std::vector<std::string> row = {FormatDouble(r.t), std::to_string(r.mode_hat.index)};
    AppendState(&row, r.x_hat, width);
    row.push_back(FormatDouble(r.esse));
    for (std::size_t k = 0; k < n_weights; ++k) {
      row.push_back(k < r.weights.size() ? FormatDouble(r.weights[k]) : std::string());
    }
    w.Row(row);
  }
}

void EnsureDirectory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) {
    throw Error(ErrorKind::kIo,
                fmt::format("cannot create directory '{}': {}", path, ec.message()));
  }
}

}  // namespace spipf
