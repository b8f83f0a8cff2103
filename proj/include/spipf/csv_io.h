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

// Minimal CSV files. Doubles are written in shortest round-trip form so that
// re-reading a file reproduces the in-memory values exactly.

#ifndef SPIPF_CSV_IO_H_
#define SPIPF_CSV_IO_H_

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "spipf/hybrid_system.h"
#include "spipf/measurement.h"
#include "spipf/particle_filter.h"
#include "spipf/systems.h"

namespace spipf {

std::string FormatDouble(double v);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void Row(const std::vector<std::string>& fields);

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t columns_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int Column(const std::string& name) const;
};

CsvTable ReadCsv(const std::string& path);

// Schemas documented in the README.
void WriteTruthCsv(const std::string& path, const TruthRun& truth);
void WriteTransitionsCsv(const std::string& path, const TruthRun& truth);
void WriteMeasurementsCsv(const std::string& path, const MeasurementPath& m);
void WriteEstimatesCsv(const std::string& path,
                       const std::vector<EstimateRecord>& records);

// Creates the directory and its parents.
void EnsureDirectory(const std::string& path);

}  // namespace spipf

#endif  // SPIPF_CSV_IO_H_
