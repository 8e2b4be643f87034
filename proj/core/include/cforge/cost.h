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

#ifndef CFORGE_COST_H_
#define CFORGE_COST_H_

#include <cstdint>
#include <string>
#include <vector>

#include "cforge/arch.h"

namespace cforge {

struct CostOptions {
  std::int64_t batch = 1;
  int flops_per_mac = 2;  // 1 is also supported
};

struct NodeCost {
  std::string id;
  OpKind op = OpKind::kRelu;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t elementwise = 0;  // activations, pools, joins, gating
  std::int64_t flops = 0;        // macs * flops_per_mac + elementwise
};

struct CostReport {
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t flops = 0;
  std::int64_t batch = 1;
  int flops_per_mac = 2;
  std::vector<NodeCost> nodes;  // topological order

  // Human-readable description of the counting rules in force.
  std::string Convention() const;
};

// Closed-form per-node counts:
//   conv-like  MACs = N*Cout*H'*W'*(Cin/groups)*k^2, params = weights + bias
//   fc         MACs = N*K*D
//   aads       MACs = N*C*H'*W'*f^2
//   batchnorm  MACs = N*C*H*W (folded affine), params = 2C
//   relu, sigmoid, pools and elementwise joins count 1 per output element;
//   nearest upsampling is free. Composite blocks sum their constituents.
CostReport ComputeCost(const ArchPlan& plan, const CostOptions& options = {});
CostReport ComputeCost(const ArchSpec& spec, const CostOptions& options = {});

inline constexpr std::int64_t kDefaultFlopBudget = 100'000'000;

struct Violation {
  std::string code;  // "C1", "C2" or "C3"
  std::string node;  // empty for whole-graph violations
  std::string message;
};

struct FeasibilityReport {
  bool feasible = true;
  std::vector<Violation> violations;
};

// The indicator 1_g:
//   C1  total FLOPs (batch 1) must be strictly below the budget
//   C2  no 1x1 convolution with stride > 1 anywhere
//   C3  past the input layer, spatial reductions must be aads nodes.
//       Global pooling and the classifier head are not downsampling stages.
FeasibilityReport ValidateConstraints(const ArchSpec& spec,
                                      std::int64_t budget_flops = kDefaultFlopBudget);

}  // namespace cforge

#endif  // CFORGE_COST_H_
