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

#ifndef CFORGE_GRAPH_H_
#define CFORGE_GRAPH_H_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cforge/arch.h"
#include "cforge/blocks.h"
#include "cforge/ops.h"
#include "cforge/tape.h"
#include "cforge/tensor.h"

namespace cforge {

template <typename T>
struct GraphOutput {
  BasicTensor<T> output;  // the output node's value; agg for a dualhead
  bool has_heads = false;
  HeadOutputs<T> heads;
};

// An executable architecture. Parameters of node `id` are drawn from an Rng
// seeded with DeriveSeed(seed, HashName(id)), so the same (spec, seed)
// always yields the same weights regardless of node declaration order.
template <typename T>
class Graph {
 public:
  static Graph Compile(const ArchSpec& spec, std::uint64_t seed);

  // x: [N, C, H, W] matching the spec's input shape.
  GraphOutput<T> Forward(BasicTape<T>& tape, const BasicTensor<T>& x, Mode mode);

  // Visits every tensor as "<node id>.<name>" in execution order.
  void VisitTensors(const TensorVisitor<T>& fn);
  std::vector<BasicTensor<T>> Parameters();
  std::int64_t ParameterCount();

  // Flags every batchnorm's running statistics as valid, e.g. after they
  // were restored from a weights file.
  void MarkStatisticsLoaded();

  const ArchSpec& spec() const { return spec_; }
  const ArchPlan& plan() const { return plan_; }
  bool ends_in_dualhead() const;

 private:
  using Layer = std::variant<std::monostate, ConvLayer<T>, BatchNormLayer<T>,
                             AttentionCondenserParams<T>, DwsepResidualParams<T>,
                             DualHeadParams<T>>;

  ArchSpec spec_;
  ArchPlan plan_;
  std::vector<Layer> layers_;  // parallel to plan_.nodes
};

using FloatGraph = Graph<float>;

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace cforge

#endif  // CFORGE_GRAPH_H_
