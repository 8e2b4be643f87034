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

#ifndef CFORGE_TOOLS_MANIFEST_H_
#define CFORGE_TOOLS_MANIFEST_H_

#include <string>
#include <vector>

#include "json.hpp"

namespace cforge::cli {

using Json = nlohmann::ordered_json;

// Lowercase hex SHA-256 of a byte string.
std::string Sha256Hex(const std::string& bytes);

std::string ReadBytes(const std::string& path);  // throws Error(kIo) naming the path
void WriteBytes(const std::string& path, const std::string& bytes);

// Regular files hash their bytes. Directories hash the sorted list of
// "<relative path> <file hash>" lines, so two directories with the same
// files hash equal wherever they live.
std::string HashPath(const std::string& path);

struct Artifact {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // everything after the program name
  Json config;                     // every option, defaults included
  std::uint64_t seed = 0;
  std::string version;
  std::vector<Artifact> inputs;
  std::vector<Artifact> outputs;

  void AddInput(const std::string& path);
  void AddOutput(const std::string& path);
  // For outputs that mix reproducible content with wall-clock numbers:
  // the caller supplies the hash of the reproducible part.
  void AddOutput(const std::string& path, const std::string& sha256);

  Json ToJson() const;
  static RunManifest FromJson(const Json& j);  // throws Error(kFormat)
  void Save(const std::string& path) const;
  static RunManifest Load(const std::string& path);
};

}  // namespace cforge::cli

#endif  // CFORGE_TOOLS_MANIFEST_H_
