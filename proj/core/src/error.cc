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

#include "cforge/error.h"

#include <atomic>
#include <iostream>
#include <mutex>

namespace cforge {

namespace {

void StderrSink(std::string_view message) {
  std::cerr << "warning: " << message << "\n";
}

std::atomic<WarningSink> g_sink{&StderrSink};
std::mutex g_sink_mu;

std::string FormatLocated(int line, int column, const std::string& message) {
  return "line " + std::to_string(line) + ", column " +
         std::to_string(column) + ": " + message;
}

}  // namespace

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch:
      return "shape_mismatch";
    case ErrorCode::kInvalidArgument:
      return "invalid_argument";
    case ErrorCode::kNumeric:
      return "numeric";
    case ErrorCode::kParse:
      return "parse";
    case ErrorCode::kIo:
      return "io";
    case ErrorCode::kFormat:
      return "format";
  }
  return "unknown";
}

ParseError::ParseError(int line, int column, const std::string& message)
    : Error(ErrorCode::kParse, FormatLocated(line, column, message)),
      line_(line),
      column_(column) {}

void SetWarningSink(WarningSink sink) {
  g_sink.store(sink == nullptr ? &StderrSink : sink);
}

void Warn(std::string_view message) {
  std::lock_guard<std::mutex> lock(g_sink_mu);
  g_sink.load()(message);
}

}  // namespace cforge
