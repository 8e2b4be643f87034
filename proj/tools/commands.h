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

#ifndef CFORGE_TOOLS_COMMANDS_H_
#define CFORGE_TOOLS_COMMANDS_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace cforge::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInfeasible = 1;
inline constexpr int kExitUsage = 2;  // usage, I/O, parse and format errors
inline constexpr int kExitDiverged = 3;

// Runs one invocation; `args` excludes the program name.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cforge::cli

#endif  // CFORGE_TOOLS_COMMANDS_H_
