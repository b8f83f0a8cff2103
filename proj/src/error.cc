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

#include "spipf/error.h"

namespace spipf {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kMultipleGuards: return "multiple_guards";
    case ErrorKind::kNumericalDivergence: return "numerical_divergence";
    case ErrorKind::kGrazingContact: return "grazing_contact";
    case ErrorKind::kOracleInapplicable: return "oracle_inapplicable";
    case ErrorKind::kModeMismatch: return "mode_mismatch";
    case ErrorKind::kSingularConfiguration: return "singular_configuration";
    case ErrorKind::kSolverStalled: return "solver_stalled";
    case ErrorKind::kDegenerateEnsemble: return "degenerate_ensemble";
    case ErrorKind::kFilterFailure: return "filter_failure";
    case ErrorKind::kSimulation: return "simulation";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kExperiment: return "experiment";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace spipf
