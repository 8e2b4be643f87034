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

#ifndef CFORGE_OPS_H_
#define CFORGE_OPS_H_

#include <array>
#include <span>

#include "cforge/tape.h"
#include "cforge/tensor.h"

namespace cforge {

// Differentiable operator set. Every op is a pure function of its tensor
// arguments (plus explicit state for batchnorm); when the tape is recording
// and an input requires grad, the op records its backward closure.

struct Conv2dOptions {
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> pad{0, 0};
  int groups = 1;
};

// Cross-correlation with zero padding. x: [N,Cin,H,W], w: [Cout,Cin/g,kh,kw],
// b: [Cout] or undefined.
template <typename T>
BasicTensor<T> Conv2d(BasicTape<T>& tape, const BasicTensor<T>& x,
                      const BasicTensor<T>& w, const BasicTensor<T>& b,
                      const Conv2dOptions& options);

enum class PointwiseKind { kRelu, kSigmoid };

template <typename T>
BasicTensor<T> PointwiseMap(BasicTape<T>& tape, const BasicTensor<T>& x,
                            PointwiseKind kind);

template <typename T>
BasicTensor<T> Relu(BasicTape<T>& tape, const BasicTensor<T>& x) {
  return PointwiseMap(tape, x, PointwiseKind::kRelu);
}

template <typename T>
BasicTensor<T> Sigmoid(BasicTape<T>& tape, const BasicTensor<T>& x) {
  return PointwiseMap(tape, x, PointwiseKind::kSigmoid);
}

// Row-wise softmax over [N,K], max-subtracted.
template <typename T>
BasicTensor<T> Softmax(BasicTape<T>& tape, const BasicTensor<T>& x);

enum class Mode { kTrain, kEval };

template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  // False until a train-mode pass has updated the running statistics.
  bool has_statistics = false;
  bool warned = false;  // the eval-before-train warning fires once per state
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState Fresh(std::int64_t channels);
};

template <typename T>
BasicTensor<T> BatchNorm2d(BasicTape<T>& tape, const BasicTensor<T>& x,
                           const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormState<T>& state,
                           Mode mode);

// [N,C,H,W] -> [N,C,1,1]
template <typename T>
BasicTensor<T> GlobalAvgPool(BasicTape<T>& tape, const BasicTensor<T>& x);

struct MaxPoolOptions {
  int kernel = 2;
  int stride = 2;
  // Partial windows at the far border produce an output (ceil extent).
  bool ceil_mode = false;
};

std::int64_t MaxPoolExtent(std::int64_t in, const MaxPoolOptions& options);

// Gradient goes to the first maximal element of each window.
template <typename T>
BasicTensor<T> MaxPool2d(BasicTape<T>& tape, const BasicTensor<T>& x,
                         const MaxPoolOptions& options);

// x: [N,D], w: [K,D], b: [K] -> x * w^T + b
template <typename T>
BasicTensor<T> FullyConnected(BasicTape<T>& tape, const BasicTensor<T>& x,
                              const BasicTensor<T>& w,
                              const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> Add(BasicTape<T>& tape, const BasicTensor<T>& a,
                   const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> Mul(BasicTape<T>& tape, const BasicTensor<T>& a,
                   const BasicTensor<T>& b);

// Scalar multiple; no gradient to the factor.
template <typename T>
BasicTensor<T> Scale(BasicTape<T>& tape, const BasicTensor<T>& x, T factor);

// x: [N,C,H,W] times s: [C] broadcast over N, H, W.
template <typename T>
BasicTensor<T> ScaleChannels(BasicTape<T>& tape, const BasicTensor<T>& x,
                             const BasicTensor<T>& s);

// Nearest-neighbour x2 upsampling cropped to [out_h, out_w].
template <typename T>
BasicTensor<T> UpsampleNearest2x(BasicTape<T>& tape, const BasicTensor<T>& x,
                                 std::int64_t out_h, std::int64_t out_w);

// [N,C,H,W] -> [N,C*H*W]
template <typename T>
BasicTensor<T> Flatten(BasicTape<T>& tape, const BasicTensor<T>& x);

// Sum of all elements as a scalar.
template <typename T>
BasicTensor<T> Sum(BasicTape<T>& tape, const BasicTensor<T>& x);

enum class ReduceKind { kGlobalAvgPool, kMaxPool };

template <typename T>
BasicTensor<T> Reduce(BasicTape<T>& tape, const BasicTensor<T>& x,
                      ReduceKind kind, const MaxPoolOptions& options = {}) {
  return kind == ReduceKind::kGlobalAvgPool ? GlobalAvgPool(tape, x)
                                            : MaxPool2d(tape, x, options);
}

// SGD with heavy-ball momentum: v <- momentum*v + g; theta <- theta - lr*v.
// momentum == 0 is plain SGD.
template <typename T>
class Sgd {
 public:
  Sgd(double learning_rate, double momentum);

  // Throws (and leaves every parameter untouched) if any gradient is NaN or
  // infinite. Parameters without a gradient are skipped.
  void Step(std::span<BasicTensor<T>> params);

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }

 private:
  double learning_rate_;
  double momentum_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace cforge

#endif  // CFORGE_OPS_H_
