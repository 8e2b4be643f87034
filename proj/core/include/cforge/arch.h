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

#ifndef CFORGE_ARCH_H_
#define CFORGE_ARCH_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cforge {

enum class OpKind {
  kConv,
  kDwconv,
  kPwconv,
  kAads,
  kAcond,
  kResblock,
  kRelu,
  kBn,
  kMaxpool,
  kGap,
  kDualhead,
};

std::string_view OpKindName(OpKind op);
std::optional<OpKind> OpKindFromName(std::string_view name);

// Extent triple of a feature map, batch excluded.
struct FeatureShape {
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return c * h * w; }
  std::string ToString() const;  // "CxHxW"
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

// Hyperparameters as written in the source. Unset fields take per-op
// defaults during shape inference; printing emits only the set ones.
struct HyperParams {
  std::optional<std::int64_t> k;  // kernel
  std::optional<std::int64_t> s;  // stride
  std::optional<std::int64_t> c;  // output channels (classes for dualhead)
  std::optional<std::int64_t> g;  // groups
  std::optional<std::int64_t> p;  // padding
  std::optional<std::int64_t> f;  // AADS filter size
  std::optional<std::int64_t> e;  // condenser embedding channels
  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct NodeSpec {
  std::string id;
  OpKind op = OpKind::kRelu;
  HyperParams hp;
  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

struct EdgeSpec {
  std::string src;
  std::string dst;
  friend bool operator==(const EdgeSpec&, const EdgeSpec&) = default;
  friend auto operator<=>(const EdgeSpec&, const EdgeSpec&) = default;
};

// The reserved id of the implicit input node.
inline constexpr std::string_view kInputId = "input";

struct ArchSpec {
  FeatureShape input;
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  std::vector<std::vector<std::string>> columns;
  std::string output;

  const NodeSpec* FindNode(std::string_view id) const;
  NodeSpec* FindNode(std::string_view id);
  bool HasId(std::string_view id) const;  // includes the input node
  std::vector<std::string> Predecessors(std::string_view id) const;
  std::vector<std::string> Successors(std::string_view id) const;
};

// Equality up to node and edge ordering. Columns compare in order.
bool StructurallyEqual(const ArchSpec& a, const ArchSpec& b);

bool IsValidId(std::string_view id);

// Throws Error(kParse) with "line L, column C: ..." diagnostics.
ArchSpec ParseArch(std::string_view text);
std::string PrintArch(const ArchSpec& spec);

// Structural checks shared by the parser and programmatic builders: ids,
// endpoints, exactly one output, acyclicity, and every node feeding the
// output. Throws Error(kInvalidArgument).
void CheckStructure(const ArchSpec& spec);

// Node ids in deterministic topological order: Kahn's algorithm, ready
// nodes taken in lexicographic id order. The input node is excluded.
std::vector<std::string> TopologicalOrder(const ArchSpec& spec);

// A node with every hyperparameter resolved and its shapes inferred.
struct ResolvedNode {
  std::string id;
  OpKind op = OpKind::kRelu;
  std::vector<std::string> preds;
  FeatureShape in;
  FeatureShape out;
  std::int64_t kernel = 0;
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  std::int64_t groups = 1;
  std::int64_t filter = 0;
  std::int64_t embed = 0;
  std::int64_t classes = 0;
  bool input_layer = false;  // direct successor of the input node
};

struct ArchPlan {
  FeatureShape input;
  std::vector<ResolvedNode> nodes;  // topological order
  std::string output;
  FeatureShape output_shape;

  const ResolvedNode* Find(std::string_view id) const;
};

// Structure check plus shape inference. A node's input is the elementwise
// sum of its predecessors, so all of them must agree in shape.
// Throws Error(kShapeMismatch) naming both endpoints on disagreement.
ArchPlan InferShapes(const ArchSpec& spec);

// Resolves one node against a given input shape, ignoring the graph. Throws
// Error(kInvalidArgument) on hyperparameters the shape cannot support.
ResolvedNode ResolveNodeShape(const NodeSpec& node, const FeatureShape& in);

std::int64_t DefaultEmbedChannels(std::int64_t channels);

}  // namespace cforge

#endif  // CFORGE_ARCH_H_
