// Copyright 2026 The Condenser Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CFORGE_ERROR_H_
#define CFORGE_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace cforge {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kNumeric,
  kParse,
  kIo,
  kFormat,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// DSL diagnostics; line and column are 1-based.
class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& message);

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Non-fatal diagnostics (e.g. batchnorm evaluated before any statistics were
// gathered). The default sink writes to stderr; tests install their own.
using WarningSink = void (*)(std::string_view message);

void SetWarningSink(WarningSink sink);
void Warn(std::string_view message);

}  // namespace cforge

#endif  // CFORGE_ERROR_H_
