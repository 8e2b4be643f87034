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

#include "manifest.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "cforge/error.h"

namespace cforge::cli {

namespace fs = std::filesystem;

std::string Sha256Hex(const std::string& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                               &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(ErrorCode::kIo, "sha256 computation failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string ReadBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteBytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

std::string HashPath(const std::string& path) {
  std::error_code ec;
  if (!fs::is_directory(path, ec)) return Sha256Hex(ReadBytes(path));
  std::vector<std::string> lines;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), path).generic_string();
    lines.push_back(rel + " " + Sha256Hex(ReadBytes(entry.path().string())) + "\n");
  }
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l;
  return Sha256Hex(all);
}

void RunManifest::AddInput(const std::string& path) { inputs.push_back({path, HashPath(path)}); }

void RunManifest::AddOutput(const std::string& path) {
  outputs.push_back({path, HashPath(path)});
}

void RunManifest::AddOutput(const std::string& path, const std::string& sha256) {
  outputs.push_back({path, sha256});
}

namespace {

Json ArtifactsToJson(const std::vector<Artifact>& list) {
  Json arr = Json::array();
  for (const auto& a : list) arr.push_back(Json{{"path", a.path}, {"sha256", a.sha256}});
  return arr;
}

std::vector<Artifact> ArtifactsFromJson(const Json& arr) {
  std::vector<Artifact> out;
  for (const auto& a : arr) {
    out.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
  }
  return out;
}

}  // namespace

Json RunManifest::ToJson() const {
  return Json{{"command", command},      {"argv", argv},
              {"config", config},        {"seed", seed},
              {"version", version},      {"inputs", ArtifactsToJson(inputs)},
              {"outputs", ArtifactsToJson(outputs)}};
}

RunManifest RunManifest::FromJson(const Json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.inputs = ArtifactsFromJson(j.at("inputs"));
    m.outputs = ArtifactsFromJson(j.at("outputs"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("run manifest: ") + e.what());
  }
}

void RunManifest::Save(const std::string& path) const { WriteBytes(path, ToJson().dump(2) + "\n"); }

RunManifest RunManifest::Load(const std::string& path) {
  Json j;
  try {
    j = Json::parse(ReadBytes(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  return FromJson(j);
}

}  // namespace cforge::cli
