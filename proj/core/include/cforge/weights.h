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

#ifndef CFORGE_WEIGHTS_H_
#define CFORGE_WEIGHTS_H_

#include <cstdint>
#include <string>

#include "cforge/graph.h"

namespace cforge {

// Binary layout, all integers little-endian:
//   "LDNW" u32 version(=1) u32 count
//   count x { u16 name_len, name, u8 ndim, ndim x u32 dim, f32 data... }
// Tensors are written in the graph's visit order, buffers included.
inline constexpr std::uint32_t kWeightsVersion = 1;

std::string SerializeWeights(Graph<float>& graph);

// Validates the whole payload against the graph before touching any tensor,
// so a failed load leaves the graph unchanged. Throws Error(kFormat).
void DeserializeWeights(Graph<float>& graph, const std::string& bytes);

void SaveWeights(Graph<float>& graph, const std::string& path);
void LoadWeights(Graph<float>& graph, const std::string& path);

}  // namespace cforge

#endif  // CFORGE_WEIGHTS_H_
