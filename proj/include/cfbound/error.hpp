// Copyright 2026 The cfbound Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace cfbound {

enum class ErrorCode {
  kSyntax,
  kUnknownVariable,
  kCycle,
  kDuplicateEdge,
  kInvalidArgument,
  kCardinality,
  kOverflow,
  kEmptyClass,
  kMissingColumn,
  kUnmappableValue,
  kEmptyInput,
  kZeroMass,
  kGridLimit,
  kSampleMismatch,
  kIo,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntax: return "syntax error";
    case ErrorCode::kUnknownVariable: return "unknown variable";
    case ErrorCode::kCycle: return "cycle detected";
    case ErrorCode::kDuplicateEdge: return "duplicate edge";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kCardinality: return "cardinality below bound";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kEmptyClass: return "empty equivalence class";
    case ErrorCode::kMissingColumn: return "missing column";
    case ErrorCode::kUnmappableValue: return "unmappable value";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kZeroMass: return "zero-mass conditioning event";
    case ErrorCode::kGridLimit: return "grid limit exceeded";
    case ErrorCode::kSampleMismatch: return "sample mismatch";
    case ErrorCode::kIo: return "i/o error";
  }
  return "error";
}

// All library failures are reported through this exception type. `line` is
// 1-based and only meaningful for text-format parse errors (0 otherwise).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int line = 0)
      : std::runtime_error(format(code, message, line)),
        code_(code),
        line_(line) {}

  ErrorCode code() const { return code_; }
  int line() const { return line_; }

  // Same error with `where` (typically a file name) prepended to the text.
  Error in(const std::string& where) const {
    return Error(code_, line_, where + ": " + what());
  }

 private:
  Error(ErrorCode code, int line, const std::string& full)
      : std::runtime_error(full), code_(code), line_(line) {}

  static std::string format(ErrorCode code, const std::string& message,
                            int line) {
    std::string out = error_code_name(code);
    if (line > 0) out += " at line " + std::to_string(line);
    out += ": ";
    out += message;
    return out;
  }

  ErrorCode code_;
  int line_;
};

}  // namespace cfbound
