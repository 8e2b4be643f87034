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

#ifndef CFORGE_BLOCKS_H_
#define CFORGE_BLOCKS_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cforge/ops.h"
#include "cforge/random.h"
#include "cforge/tape.h"
#include "cforge/tensor.h"

namespace cforge {

// Visitor over a block's tensors. `trainable` is false for buffers such as
// batchnorm running statistics, which are serialized but not optimized.
template <typename T>
using TensorVisitor =
    std::function<void(const std::string& name, BasicTensor<T>& tensor, bool trainable)>;

// Zero-mean normal with variance 2 / fan_in.
template <typename T>
BasicTensor<T> HeNormal(const Shape& shape, std::int64_t fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Anti-aliased downsampling: fixed binomial blur (reflection padded), then
// stride-2 subsampling, per channel. Output extent is ceil(in / 2).

std::vector<double> BinomialTaps(int filter_size);
std::int64_t AadsExtent(std::int64_t in);

template <typename T>
BasicTensor<T> AadsDownsample(BasicTape<T>& tape, const BasicTensor<T>& x,
                              int filter_size);

// ---------------------------------------------------------------------------

template <typename T>
struct ConvLayer {
  BasicTensor<T> weight;
  BasicTensor<T> bias;  // undefined when the layer has no bias
  Conv2dOptions options;

  static ConvLayer Init(std::int64_t in_channels, std::int64_t out_channels,
                        int kernel, int stride, int pad, int groups,
                        bool with_bias, Rng& rng);
  BasicTensor<T> Forward(BasicTape<T>& tape, const BasicTensor<T>& x) const {
    return Conv2d(tape, x, weight, bias, options);
  }
  void Visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

template <typename T>
struct BatchNormLayer {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BatchNormState<T> state;

  static BatchNormLayer Init(std::int64_t channels);
  BasicTensor<T> Forward(BasicTape<T>& tape, const BasicTensor<T>& x,
                         Mode mode) {
    return BatchNorm2d(tape, x, gamma, beta, state, mode);
  }
  void Visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

// ---------------------------------------------------------------------------
// Attention condenser.
//
//   condensed = maxpool2x2(V)                      (ceil extent)
//   embedded  = relu(pw_embed(dw3x3(condensed)))   (E channels)
//   A         = sigmoid(upsample2x(pw_expand(embedded)))  cropped to V
//   out       = V * (A * S) + V                    (residual on by default)
//
// The expansion pointwise conv runs before the nearest-neighbour upsample;
// the two commute exactly, and this order costs a quarter of the FLOPs.

template <typename T>
struct AttentionCondenserParams {
  std::int64_t channels = 0;
  std::int64_t embed_channels = 0;
  BasicTensor<T> embed_dw;   // [C,1,3,3]
  BasicTensor<T> embed_pw;   // [E,C,1,1]
  BasicTensor<T> embed_pw_bias;
  BasicTensor<T> expand_pw;  // [C,E,1,1]
  BasicTensor<T> expand_pw_bias;
  BasicTensor<T> scale;      // S, [C], initialized to 1
  bool residual = true;

  static AttentionCondenserParams Init(std::int64_t channels,
                                       std::int64_t embed_channels, Rng& rng,
                                       bool residual = true);
  void Visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

// The attention map A of the condenser, exposed for inspection.
template <typename T>
BasicTensor<T> AttentionMap(BasicTape<T>& tape, const BasicTensor<T>& x,
                            const AttentionCondenserParams<T>& p);

template <typename T>
BasicTensor<T> AttentionCondenser(BasicTape<T>& tape, const BasicTensor<T>& x,
                                  const AttentionCondenserParams<T>& p);

// ---------------------------------------------------------------------------
// y = x + BN(pointwise(relu(BN(depthwise3x3(x))))); stride 1 throughout.

template <typename T>
struct DwsepResidualParams {
  std::int64_t channels = 0;
  BasicTensor<T> depthwise;  // [C,1,3,3]
  BatchNormLayer<T> bn1;
  BasicTensor<T> pointwise;  // [C,C,1,1]
  BatchNormLayer<T> bn2;

  static DwsepResidualParams Init(std::int64_t channels, Rng& rng);
  void Visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

template <typename T>
BasicTensor<T> DwsepResidualBlock(BasicTape<T>& tape, const BasicTensor<T>& x,
                                  DwsepResidualParams<T>& p, Mode mode);

// ---------------------------------------------------------------------------
// Two independent FC heads, each softmaxed, averaged into the final output.

template <typename T>
struct DualHeadParams {
  BasicTensor<T> fc1_weight;  // [K,D]
  BasicTensor<T> fc1_bias;
  BasicTensor<T> fc2_weight;
  BasicTensor<T> fc2_bias;

  static DualHeadParams Init(std::int64_t features, std::int64_t classes, Rng& rng);
  void Visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

template <typename T>
struct HeadOutputs {
  BasicTensor<T> p1;
  BasicTensor<T> p2;
  BasicTensor<T> agg;
};

// features: [N,D] or [N,C,1,1].
template <typename T>
HeadOutputs<T> DualHeadForward(BasicTape<T>& tape, const BasicTensor<T>& features,
                               const DualHeadParams<T>& p);

}  // namespace cforge

#endif  // CFORGE_BLOCKS_H_
