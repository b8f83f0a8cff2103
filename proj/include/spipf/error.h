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

#ifndef SPIPF_ERROR_H_
#define SPIPF_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace spipf {

// Failure categories. The CLI prints these names in its error line, so
// renaming one is an interface change.
enum class ErrorKind {
  kPrecondition,
  kShape,
  kRange,
  kMultipleGuards,
  kNumericalDivergence,
  kGrazingContact,
  kOracleInapplicable,
  kModeMismatch,
  kSingularConfiguration,
  kSolverStalled,
  kDegenerateEnsemble,
  kFilterFailure,
  kSimulation,
  kConfig,
  kExperiment,
  kIo,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace spipf

#endif  // SPIPF_ERROR_H_
