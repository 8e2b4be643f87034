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

#include "cforge/graph.h"

#include <map>

#include "cforge/error.h"
#include "cforge/random.h"

namespace cforge {

template <typename T>
Graph<T> Graph<T>::Compile(const ArchSpec& spec, std::uint64_t seed) {
  Graph g;
  g.spec_ = spec;
  g.plan_ = InferShapes(spec);
  for (const ResolvedNode& n : g.plan_.nodes) {
    Rng rng(DeriveSeed(seed, HashName(n.id)));
    const int k = static_cast<int>(n.kernel);
    const int s = static_cast<int>(n.stride);
    const int p = static_cast<int>(n.pad);
    const int groups = static_cast<int>(n.groups);
    switch (n.op) {
      case OpKind::kConv:
      case OpKind::kDwconv:
      case OpKind::kPwconv:
        g.layers_.emplace_back(
            ConvLayer<T>::Init(n.in.c, n.out.c, k, s, p, groups, true, rng));
        break;
      case OpKind::kBn:
        g.layers_.emplace_back(BatchNormLayer<T>::Init(n.in.c));
        break;
      case OpKind::kAcond:
        g.layers_.emplace_back(AttentionCondenserParams<T>::Init(n.in.c, n.embed, rng));
        break;
      case OpKind::kResblock:
        g.layers_.emplace_back(DwsepResidualParams<T>::Init(n.in.c, rng));
        break;
      case OpKind::kDualhead:
        g.layers_.emplace_back(DualHeadParams<T>::Init(n.in.numel(), n.classes, rng));
        break;
      default:
        g.layers_.emplace_back(std::monostate{});
        break;
    }
  }
  g.VisitTensors([](const std::string&, BasicTensor<T>& t, bool trainable) {
    t.set_requires_grad(trainable);
  });
  return g;
}

template <typename T>
GraphOutput<T> Graph<T>::Forward(BasicTape<T>& tape, const BasicTensor<T>& x, Mode mode) {
  const FeatureShape& in = plan_.input;
  if (!x.defined() || x.rank() != 4 || x.dim(1) != in.c || x.dim(2) != in.h ||
      x.dim(3) != in.w) {
    throw Error(ErrorCode::kShapeMismatch,
                "graph input must be [N," + std::to_string(in.c) + "," +
                    std::to_string(in.h) + "," + std::to_string(in.w) + "], got " +
                    (x.defined() ? ShapeString(x.shape()) : std::string("<undefined>")));
  }
  std::map<std::string, BasicTensor<T>> values{{std::string(kInputId), x}};
  GraphOutput<T> result;
  for (std::size_t i = 0; i < plan_.nodes.size(); ++i) {
    const ResolvedNode& n = plan_.nodes[i];
    BasicTensor<T> h = values.at(n.preds.front());
    for (std::size_t j = 1; j < n.preds.size(); ++j) {
      h = Add(tape, h, values.at(n.preds[j]));
    }
    Layer& layer = layers_[i];
    BasicTensor<T> y;
    switch (n.op) {
      case OpKind::kConv:
      case OpKind::kDwconv:
      case OpKind::kPwconv:
        y = std::get<ConvLayer<T>>(layer).Forward(tape, h);
        break;
      case OpKind::kBn:
        y = std::get<BatchNormLayer<T>>(layer).Forward(tape, h, mode);
        break;
      case OpKind::kAcond:
        y = AttentionCondenser(tape, h, std::get<AttentionCondenserParams<T>>(layer));
        break;
      case OpKind::kResblock:
        y = DwsepResidualBlock(tape, h, std::get<DwsepResidualParams<T>>(layer), mode);
        break;
      case OpKind::kAads:
        y = AadsDownsample(tape, h, static_cast<int>(n.filter));
        break;
      case OpKind::kRelu:
        y = Relu(tape, h);
        break;
      case OpKind::kMaxpool:
        y = MaxPool2d(tape, h,
                      MaxPoolOptions{static_cast<int>(n.kernel), static_cast<int>(n.stride),
                                     false});
        break;
      case OpKind::kGap:
        y = GlobalAvgPool(tape, h);
        break;
      case OpKind::kDualhead: {
        HeadOutputs<T> heads =
            DualHeadForward(tape, h, std::get<DualHeadParams<T>>(layer));
        y = heads.agg;
        if (n.id == plan_.output) {
          result.has_heads = true;
          result.heads = heads;
        }
        break;
      }
    }
    values[n.id] = y;
  }
  result.output = values.at(plan_.output);
  return result;
}

template <typename T>
void Graph<T>::VisitTensors(const TensorVisitor<T>& fn) {
  for (std::size_t i = 0; i < plan_.nodes.size(); ++i) {
    const std::string prefix = plan_.nodes[i].id + ".";
    std::visit(
        [&](auto& layer) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(layer)>, std::monostate>) {
            layer.Visit(prefix, fn);
          }
        },
        layers_[i]);
  }
}

template <typename T>
std::vector<BasicTensor<T>> Graph<T>::Parameters() {
  std::vector<BasicTensor<T>> params;
  VisitTensors([&](const std::string&, BasicTensor<T>& t, bool trainable) {
    if (trainable) params.push_back(t);
  });
  return params;
}

template <typename T>
std::int64_t Graph<T>::ParameterCount() {
  std::int64_t count = 0;
  for (const BasicTensor<T>& t : Parameters()) count += t.numel();
  return count;
}

template <typename T>
void Graph<T>::MarkStatisticsLoaded() {
  for (Layer& layer : layers_) {
    if (auto* bn = std::get_if<BatchNormLayer<T>>(&layer)) {
      bn->state.has_statistics = true;
    } else if (auto* res = std::get_if<DwsepResidualParams<T>>(&layer)) {
      res->bn1.state.has_statistics = true;
      res->bn2.state.has_statistics = true;
    }
  }
}

template <typename T>
bool Graph<T>::ends_in_dualhead() const {
  const ResolvedNode* out = plan_.Find(plan_.output);
  return out != nullptr && out->op == OpKind::kDualhead;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace cforge
