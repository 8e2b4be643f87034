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

#include "cforge/weights.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <vector>

#include "cforge/error.h"

namespace cforge {

namespace {

static_assert(std::endian::native == std::endian::little,
              "weights I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'D', 'N', 'W'};

template <typename U>
void Put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U Get(const char* what) {
    U value;
    std::memcpy(&value, Take(sizeof(U), what), sizeof(U));
    return value;
  }

  const char* Take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::kFormat, std::string("weights file truncated while reading ") +
                                          what + " at byte " + std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

struct Record {
  Shape shape;
  std::vector<float> data;
};

}  // namespace

std::string SerializeWeights(Graph<float>& graph) {
  std::string out(kMagic, 4);
  Put<std::uint32_t>(out, kWeightsVersion);
  std::uint32_t count = 0;
  graph.VisitTensors([&](const std::string&, Tensor&, bool) { ++count; });
  Put<std::uint32_t>(out, count);
  graph.VisitTensors([&](const std::string& name, Tensor& t, bool) {
    Put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    Put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::int64_t d : t.shape()) Put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.raw()), sizeof(float) * t.numel());
  });
  return out;
}

void DeserializeWeights(Graph<float>& graph, const std::string& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.Take(4, "magic"), kMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "bad weights magic (expected LDNW)");
  }
  const auto version = in.Get<std::uint32_t>("version");
  if (version != kWeightsVersion) {
    throw Error(ErrorCode::kFormat, "unsupported weights version " + std::to_string(version));
  }
  const auto count = in.Get<std::uint32_t>("tensor count");
  std::map<std::string, Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.Get<std::uint16_t>("name length");
    std::string name(in.Take(len, "name"), len);
    Record rec;
    const auto ndim = in.Get<std::uint8_t>("rank");
    std::int64_t numel = 1;
    for (int d = 0; d < ndim; ++d) {
      rec.shape.push_back(in.Get<std::uint32_t>("dims"));
      numel *= rec.shape.back();
    }
    rec.data.resize(static_cast<std::size_t>(numel));
    std::memcpy(rec.data.data(), in.Take(sizeof(float) * numel, name.c_str()),
                sizeof(float) * numel);
    if (!records.emplace(name, std::move(rec)).second) {
      throw Error(ErrorCode::kFormat, "duplicate tensor '" + name + "' in weights file");
    }
  }
  if (!in.done()) throw Error(ErrorCode::kFormat, "trailing bytes after weights payload");

  std::size_t matched = 0;
  graph.VisitTensors([&](const std::string& name, Tensor& t, bool) {
    auto it = records.find(name);
    if (it == records.end()) {
      throw Error(ErrorCode::kFormat, "missing tensor '" + name + "' in weights file");
    }
    if (it->second.shape != t.shape()) {
      throw Error(ErrorCode::kFormat, "shape mismatch for tensor '" + name + "': file has " +
                                          ShapeString(it->second.shape) + ", graph expects " +
                                          ShapeString(t.shape()));
    }
    ++matched;
  });
  if (matched != records.size()) {
    for (const auto& [name, rec] : records) {
      bool known = false;
      graph.VisitTensors([&](const std::string& n, Tensor&, bool) { known |= n == name; });
      if (!known) throw Error(ErrorCode::kFormat, "unexpected tensor '" + name + "'");
    }
  }
  graph.VisitTensors([&](const std::string& name, Tensor& t, bool) {
    const Record& rec = records.at(name);
    std::memcpy(t.raw(), rec.data.data(), sizeof(float) * rec.data.size());
  });
  graph.MarkStatisticsLoaded();
}

void SaveWeights(Graph<float>& graph, const std::string& path) {
  const std::string bytes = SerializeWeights(graph);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
}

void LoadWeights(Graph<float>& graph, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open weights file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    DeserializeWeights(graph, bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

}  // namespace cforge
