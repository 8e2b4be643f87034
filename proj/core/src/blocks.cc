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

#include "cforge/blocks.h"

#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "cforge/error.h"

namespace cforge {

template <typename T>
BasicTensor<T> HeNormal(const Shape& shape, std::int64_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  BasicTensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// ---------------------------------------------------------------------------

std::vector<double> BinomialTaps(int filter_size) {
  switch (filter_size) {
    case 3:
      return {0.25, 0.5, 0.25};
    case 5:
      return {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    default:
      throw Error(ErrorCode::kInvalidArgument,
                  "aads: unsupported filter size " + std::to_string(filter_size) +
                      " (expected 3 or 5)");
  }
}

std::int64_t AadsExtent(std::int64_t in) { return (in + 1) / 2; }

namespace {

// Reflection without edge repeat (-1 -> 1, n -> n-2), folded periodically
// so that any padding width is valid.
std::int64_t Reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

template <typename T>
BasicTensor<T> AadsDownsample(BasicTape<T>& tape, const BasicTensor<T>& x,
                              int filter_size) {
  const std::vector<double> taps = BinomialTaps(filter_size);
  if (!x.defined() || x.rank() != 4) {
    throw Error(ErrorCode::kShapeMismatch, "aads: input must be rank 4");
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) {
    throw Error(ErrorCode::kShapeMismatch,
                "aads: needs H, W >= 2, got " + ShapeString(x.shape()));
  }
  const int f = filter_size;
  const int pad = f / 2;
  const std::int64_t ho = AadsExtent(h), wo = AadsExtent(w);
  std::vector<T> kernel(static_cast<std::size_t>(f * f));
  for (int a = 0; a < f; ++a) {
    for (int b = 0; b < f; ++b) kernel[a * f + b] = static_cast<T>(taps[a] * taps[b]);
  }
  // Reflected source index for every (output position, tap) pair.
  std::vector<std::int64_t> row_src(static_cast<std::size_t>(ho * f));
  std::vector<std::int64_t> col_src(static_cast<std::size_t>(wo * f));
  for (std::int64_t o = 0; o < ho; ++o)
    for (int k = 0; k < f; ++k) row_src[o * f + k] = Reflect(2 * o - pad + k, h);
  for (std::int64_t o = 0; o < wo; ++o)
    for (int k = 0; k < f; ++k) col_src[o * f + k] = Reflect(2 * o - pad + k, w);

  BasicTensor<T> y(Shape{n, c, ho, wo});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T* p = x.raw() + i * h * w;
    T* q = y.raw() + i * ho * wo;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        for (int ky = 0; ky < f; ++ky) {
          const T* src_row = p + row_src[oy * f + ky] * w;
          for (int kx = 0; kx < f; ++kx) {
            acc += kernel[ky * f + kx] * src_row[col_src[ox * f + kx]];
          }
        }
        q[oy * wo + ox] = acc;
      }
    }
  }
  if (tape.ShouldRecord({&x})) {
    tape.Record("aads_downsample", {x}, y,
                [x, y, kernel, row_src, col_src, n, c, h, w, ho, wo, f]() {
      const T* dy = y.grad().data();
      T* dx = x.mutable_grad().data();
      for (std::int64_t i = 0; i < n * c; ++i) {
        T* g = dx + i * h * w;
        const T* go = dy + i * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const T v = go[oy * wo + ox];
            for (int ky = 0; ky < f; ++ky) {
              T* dst_row = g + row_src[oy * f + ky] * w;
              for (int kx = 0; kx < f; ++kx) {
                dst_row[col_src[ox * f + kx]] += kernel[ky * f + kx] * v;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

template <typename T>
ConvLayer<T> ConvLayer<T>::Init(std::int64_t in_channels, std::int64_t out_channels,
                                int kernel, int stride, int pad, int groups,
                                bool with_bias, Rng& rng) {
  ConvLayer layer;
  const std::int64_t cin_g = in_channels / groups;
  layer.weight = HeNormal<T>(Shape{out_channels, cin_g, kernel, kernel},
                             cin_g * kernel * kernel, rng);
  if (with_bias) layer.bias = BasicTensor<T>(Shape{out_channels});
  layer.options = Conv2dOptions{{stride, stride}, {pad, pad}, groups};
  return layer;
}

template <typename T>
void ConvLayer<T>::Visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(prefix + "weight", weight, true);
  if (bias.defined()) fn(prefix + "bias", bias, true);
}

template <typename T>
BatchNormLayer<T> BatchNormLayer<T>::Init(std::int64_t channels) {
  BatchNormLayer layer;
  layer.gamma = BasicTensor<T>::Full(Shape{channels}, T(1));
  layer.beta = BasicTensor<T>(Shape{channels});
  layer.state = BatchNormState<T>::Fresh(channels);
  return layer;
}

template <typename T>
void BatchNormLayer<T>::Visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(prefix + "gamma", gamma, true);
  fn(prefix + "beta", beta, true);
  fn(prefix + "running_mean", state.running_mean, false);
  fn(prefix + "running_var", state.running_var, false);
}

// ---------------------------------------------------------------------------

template <typename T>
AttentionCondenserParams<T> AttentionCondenserParams<T>::Init(
    std::int64_t channels, std::int64_t embed_channels, Rng& rng, bool residual) {
  if (channels < 1 || embed_channels < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "attention condenser: channel counts must be >= 1");
  }
  AttentionCondenserParams p;
  p.channels = channels;
  p.embed_channels = embed_channels;
  p.embed_dw = HeNormal<T>(Shape{channels, 1, 3, 3}, 9, rng);
  p.embed_pw = HeNormal<T>(Shape{embed_channels, channels, 1, 1}, channels, rng);
  p.embed_pw_bias = BasicTensor<T>(Shape{embed_channels});
  p.expand_pw = HeNormal<T>(Shape{channels, embed_channels, 1, 1}, embed_channels, rng);
  p.expand_pw_bias = BasicTensor<T>(Shape{channels});
  p.scale = BasicTensor<T>::Full(Shape{channels}, T(1));
  p.residual = residual;
  return p;
}

template <typename T>
void AttentionCondenserParams<T>::Visit(const std::string& prefix,
                                        const TensorVisitor<T>& fn) {
  fn(prefix + "embed_dw", embed_dw, true);
  fn(prefix + "embed_pw", embed_pw, true);
  fn(prefix + "embed_pw_bias", embed_pw_bias, true);
  fn(prefix + "expand_pw", expand_pw, true);
  fn(prefix + "expand_pw_bias", expand_pw_bias, true);
  fn(prefix + "scale", scale, true);
}

template <typename T>
BasicTensor<T> AttentionMap(BasicTape<T>& tape, const BasicTensor<T>& x,
                            const AttentionCondenserParams<T>& p) {
  if (!x.defined() || x.rank() != 4 || x.dim(1) != p.channels) {
    throw Error(ErrorCode::kShapeMismatch,
                "attention condenser: expected [N," + std::to_string(p.channels) +
                    ",H,W] input, got " +
                    (x.defined() ? ShapeString(x.shape()) : std::string("<undefined>")));
  }
  const std::int64_t h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) {
    throw Error(ErrorCode::kShapeMismatch, "attention condenser: needs H, W >= 2");
  }
  BasicTensor<T> condensed = MaxPool2d(tape, x, MaxPoolOptions{2, 2, true});
  BasicTensor<T> e = Conv2d(tape, condensed, p.embed_dw, BasicTensor<T>(),
                            Conv2dOptions{{1, 1}, {1, 1}, static_cast<int>(p.channels)});
  e = Conv2d(tape, e, p.embed_pw, p.embed_pw_bias, Conv2dOptions{});
  e = Relu(tape, e);
  BasicTensor<T> logits = Conv2d(tape, e, p.expand_pw, p.expand_pw_bias, Conv2dOptions{});
  logits = UpsampleNearest2x(tape, logits, h, w);
  return Sigmoid(tape, logits);
}

template <typename T>
BasicTensor<T> AttentionCondenser(BasicTape<T>& tape, const BasicTensor<T>& x,
                                  const AttentionCondenserParams<T>& p) {
  BasicTensor<T> a = AttentionMap(tape, x, p);
  BasicTensor<T> gated = Mul(tape, x, ScaleChannels(tape, a, p.scale));
  return p.residual ? Add(tape, gated, x) : gated;
}

// ---------------------------------------------------------------------------

template <typename T>
DwsepResidualParams<T> DwsepResidualParams<T>::Init(std::int64_t channels, Rng& rng) {
  DwsepResidualParams p;
  p.channels = channels;
  p.depthwise = HeNormal<T>(Shape{channels, 1, 3, 3}, 9, rng);
  p.bn1 = BatchNormLayer<T>::Init(channels);
  p.pointwise = HeNormal<T>(Shape{channels, channels, 1, 1}, channels, rng);
  p.bn2 = BatchNormLayer<T>::Init(channels);
  return p;
}

template <typename T>
void DwsepResidualParams<T>::Visit(const std::string& prefix,
                                   const TensorVisitor<T>& fn) {
  fn(prefix + "depthwise", depthwise, true);
  bn1.Visit(prefix + "bn1.", fn);
  fn(prefix + "pointwise", pointwise, true);
  bn2.Visit(prefix + "bn2.", fn);
}

template <typename T>
BasicTensor<T> DwsepResidualBlock(BasicTape<T>& tape, const BasicTensor<T>& x,
                                  DwsepResidualParams<T>& p, Mode mode) {
  if (!x.defined() || x.rank() != 4 || x.dim(1) != p.channels) {
    throw Error(ErrorCode::kShapeMismatch,
                "residual block: skip path needs " + std::to_string(p.channels) +
                    " input channels, got " +
                    (x.defined() ? ShapeString(x.shape()) : std::string("<undefined>")));
  }
  BasicTensor<T> h = Conv2d(tape, x, p.depthwise, BasicTensor<T>(),
                            Conv2dOptions{{1, 1}, {1, 1}, static_cast<int>(p.channels)});
  h = Relu(tape, p.bn1.Forward(tape, h, mode));
  h = Conv2d(tape, h, p.pointwise, BasicTensor<T>(), Conv2dOptions{});
  h = p.bn2.Forward(tape, h, mode);
  return Add(tape, x, h);
}

// ---------------------------------------------------------------------------

template <typename T>
DualHeadParams<T> DualHeadParams<T>::Init(std::int64_t features, std::int64_t classes,
                                          Rng& rng) {
  if (classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "dual head: needs K >= 2 classes");
  }
  DualHeadParams p;
  p.fc1_weight = HeNormal<T>(Shape{classes, features}, features, rng);
  p.fc1_bias = BasicTensor<T>(Shape{classes});
  p.fc2_weight = HeNormal<T>(Shape{classes, features}, features, rng);
  p.fc2_bias = BasicTensor<T>(Shape{classes});
  return p;
}

template <typename T>
void DualHeadParams<T>::Visit(const std::string& prefix, const TensorVisitor<T>& fn) {
  fn(prefix + "fc1_weight", fc1_weight, true);
  fn(prefix + "fc1_bias", fc1_bias, true);
  fn(prefix + "fc2_weight", fc2_weight, true);
  fn(prefix + "fc2_bias", fc2_bias, true);
}

template <typename T>
HeadOutputs<T> DualHeadForward(BasicTape<T>& tape, const BasicTensor<T>& features,
                               const DualHeadParams<T>& p) {
  if (p.fc1_weight.dim(0) < 2) {
    throw Error(ErrorCode::kInvalidArgument, "dual head: needs K >= 2 classes");
  }
  BasicTensor<T> flat = features.rank() == 4 ? Flatten(tape, features) : features;
  HeadOutputs<T> out;
  out.p1 = Softmax(tape, FullyConnected(tape, flat, p.fc1_weight, p.fc1_bias));
  out.p2 = Softmax(tape, FullyConnected(tape, flat, p.fc2_weight, p.fc2_bias));
  out.agg = Scale(tape, Add(tape, out.p1, out.p2), T(0.5));
  return out;
}

#define CFORGE_INSTANTIATE_BLOCKS(T)                                            \
  template BasicTensor<T> HeNormal<T>(const Shape&, std::int64_t, Rng&);        \
  template BasicTensor<T> AadsDownsample(BasicTape<T>&, const BasicTensor<T>&,  \
                                         int);                                  \
  template struct ConvLayer<T>;                                                 \
  template struct BatchNormLayer<T>;                                            \
  template struct AttentionCondenserParams<T>;                                  \
  template BasicTensor<T> AttentionMap(BasicTape<T>&, const BasicTensor<T>&,    \
                                       const AttentionCondenserParams<T>&);     \
  template BasicTensor<T> AttentionCondenser(                                   \
      BasicTape<T>&, const BasicTensor<T>&, const AttentionCondenserParams<T>&);\
  template struct DwsepResidualParams<T>;                                       \
  template BasicTensor<T> DwsepResidualBlock(                                   \
      BasicTape<T>&, const BasicTensor<T>&, DwsepResidualParams<T>&, Mode);     \
  template struct DualHeadParams<T>;                                            \
  template HeadOutputs<T> DualHeadForward(BasicTape<T>&, const BasicTensor<T>&, \
                                          const DualHeadParams<T>&);

CFORGE_INSTANTIATE_BLOCKS(float)
CFORGE_INSTANTIATE_BLOCKS(double)

#undef CFORGE_INSTANTIATE_BLOCKS

}  // namespace cforge
