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

#include "cforge/cost.h"

#include "cforge/error.h"

namespace cforge {

namespace {

NodeCost CostOf(const ResolvedNode& n, std::int64_t batch) {
  NodeCost cost;
  cost.id = n.id;
  cost.op = n.op;
  const std::int64_t in_el = batch * n.in.numel();
  const std::int64_t out_el = batch * n.out.numel();
  const std::int64_t c = n.in.c;
  // Predecessor outputs are summed elementwise before the node runs.
  cost.elementwise += static_cast<std::int64_t>(n.preds.size() - 1) * in_el;
  switch (n.op) {
    case OpKind::kConv:
    case OpKind::kDwconv:
    case OpKind::kPwconv: {
      const std::int64_t per_out = (c / n.groups) * n.kernel * n.kernel;
      cost.macs += out_el * per_out;
      cost.params += n.out.c * per_out + n.out.c;
      break;
    }
    case OpKind::kAads:
      cost.macs += out_el * n.filter * n.filter;
      break;
    case OpKind::kAcond: {
      const std::int64_t hp = (n.in.h + 1) / 2, wp = (n.in.w + 1) / 2;
      const std::int64_t low = batch * hp * wp;
      const std::int64_t e = n.embed;
      cost.elementwise += low * c;           // max-pool
      cost.macs += low * c * 9;              // depthwise 3x3
      cost.macs += low * e * c;              // embed pointwise
      cost.elementwise += low * e;           // relu
      cost.macs += low * c * e;              // expand pointwise
      cost.elementwise += in_el;             // sigmoid
      cost.elementwise += 3 * in_el;         // A*S, V*(.), + V
      cost.params += c * 9 + e * c + e + c * e + c + c;
      break;
    }
    case OpKind::kResblock:
      cost.macs += in_el * 9;  // depthwise
      cost.macs += in_el;      // bn1
      cost.elementwise += in_el;  // relu
      cost.macs += in_el * c;  // pointwise
      cost.macs += in_el;      // bn2
      cost.elementwise += in_el;  // skip add
      cost.params += c * 9 + 2 * c + c * c + 2 * c;
      break;
    case OpKind::kRelu:
      cost.elementwise += out_el;
      break;
    case OpKind::kBn:
      cost.macs += out_el;
      cost.params += 2 * c;
      break;
    case OpKind::kMaxpool:
    case OpKind::kGap:
      cost.elementwise += out_el;
      break;
    case OpKind::kDualhead: {
      const std::int64_t d = n.in.numel();
      const std::int64_t k = n.classes;
      cost.macs += 2 * batch * k * d;
      cost.elementwise += 2 * batch * k;  // two softmaxes
      cost.elementwise += batch * k;      // aggregation
      cost.params += 2 * (k * d + k);
      break;
    }
  }
  return cost;
}

}  // namespace

std::string CostReport::Convention() const {
  return "1 MAC = " + std::to_string(flops_per_mac) +
         " FLOPs; activations, pools and elementwise joins 1 FLOP per output "
         "element; batch " + std::to_string(batch);
}

CostReport ComputeCost(const ArchPlan& plan, const CostOptions& options) {
  if (options.batch < 1) {
    throw Error(ErrorCode::kInvalidArgument, "cost batch must be >= 1");
  }
  if (options.flops_per_mac != 1 && options.flops_per_mac != 2) {
    throw Error(ErrorCode::kInvalidArgument, "flops_per_mac must be 1 or 2");
  }
  CostReport report;
  report.batch = options.batch;
  report.flops_per_mac = options.flops_per_mac;
  for (const ResolvedNode& n : plan.nodes) {
    NodeCost c = CostOf(n, options.batch);
    c.flops = c.macs * options.flops_per_mac + c.elementwise;
    report.params += c.params;
    report.macs += c.macs;
    report.flops += c.flops;
    report.nodes.push_back(std::move(c));
  }
  return report;
}

CostReport ComputeCost(const ArchSpec& spec, const CostOptions& options) {
  return ComputeCost(InferShapes(spec), options);
}

FeasibilityReport ValidateConstraints(const ArchSpec& spec, std::int64_t budget_flops) {
  const ArchPlan plan = InferShapes(spec);
  const CostReport cost = ComputeCost(plan);
  FeasibilityReport report;
  auto add = [&](const char* code, const std::string& node, const std::string& msg) {
    report.violations.push_back({code, node, msg});
  };
  if (cost.flops >= budget_flops) {
    add("C1", "",
        "total FLOPs " + std::to_string(cost.flops) + " is not under the budget " +
            std::to_string(budget_flops));
  }
  for (const ResolvedNode& n : plan.nodes) {
    const bool conv_like = n.op == OpKind::kConv || n.op == OpKind::kDwconv ||
                           n.op == OpKind::kPwconv;
    if (conv_like && n.kernel == 1 && n.stride > 1) {
      add("C2", n.id, "pointwise convolution with stride " + std::to_string(n.stride));
    }
    const bool reduces = n.out.h < n.in.h || n.out.w < n.in.w;
    const bool exempt = n.input_layer || n.op == OpKind::kAads ||
                        n.op == OpKind::kGap || n.op == OpKind::kDualhead;
    if (reduces && !exempt) {
      add("C3", n.id,
          std::string(OpKindName(n.op)) + " reduces " + n.in.ToString() + " to " +
              n.out.ToString() + " after the input layer; use aads");
    }
  }
  report.feasible = report.violations.empty();
  return report;
}

}  // namespace cforge
