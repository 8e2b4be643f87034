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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "cforge/error.h"
#include "cforge/ops.h"
#include "cforge/tape.h"
#include "cforge/tensor.h"
#include "support/gradcheck.h"
#include "support/naive_ops.h"

namespace cforge {
namespace {

using testing::CheckGradients;
using testing::ProjectToScalar;
using testing::RandomTensor;
using testing::RandomTensor64;

constexpr int kSeeds = 10;
constexpr double kMaxRelError = 1e-4;

std::vector<double> ToVector(const Tensor64& t) {
  return {t.data().begin(), t.data().end()};
}

TEST(TensorTest, ShapeAndDataAgree) {
  Tensor t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120);
  EXPECT_EQ(t.data().size(), 120u);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), Error);
}

TEST(TensorTest, GradSlotMatchesShape) {
  Tensor t(Shape{3, 4});
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.mutable_grad().size(), t.data().size());
  EXPECT_TRUE(t.has_grad());
}

TEST(TensorTest, CopiesAliasClonesDoNot) {
  Tensor a = Tensor::Full(Shape{2}, 1.0f);
  Tensor alias = a;
  Tensor copy = a.Clone();
  a.data()[0] = 5.0f;
  EXPECT_EQ(alias.data()[0], 5.0f);
  EXPECT_EQ(copy.data()[0], 1.0f);
}

TEST(Conv2dTest, IdentitySizeKernel) {
  Tape tape = Tape::Inference();
  Tensor y = Conv2d(tape, Tensor::Full(Shape{1, 1, 1, 1}, 1.0f),
                    Tensor::Full(Shape{1, 1, 1, 1}, 1.0f), Tensor(), {});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 1.0f);
}

TEST(Conv2dTest, SumOfOnes) {
  Tape tape = Tape::Inference();
  Tensor y = Conv2d(tape, Tensor::Full(Shape{1, 1, 3, 3}, 1.0f),
                    Tensor::Full(Shape{1, 1, 3, 3}, 1.0f), Tensor(), {});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0f);
}

TEST(Conv2dTest, MatchesNaiveLoopSeed7) {
  Tensor64 x = RandomTensor64(Shape{1, 2, 5, 5}, 7);
  Tensor64 w = RandomTensor64(Shape{3, 2, 3, 3}, 7 + 1000);
  Tape64 tape = Tape64::Inference();
  Tensor64 y = Conv2d(tape, x, w, Tensor64(), {});
  auto expected = testing::NaiveConv2d(ToVector(x), ToVector(w), {},
                                       {1, 2, 5, 5, 3, 3, 3, 1, 1, 0, 0, 1});
  ASSERT_EQ(static_cast<std::size_t>(y.numel()), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(y.data()[i], expected[i], 1e-6 * std::max(1.0, std::abs(expected[i])));
  }
  // Working precision agrees with the 64-bit oracle to float round-off.
  Tape ftape = Tape::Inference();
  Tensor xf(x.shape(), std::vector<float>(x.data().begin(), x.data().end()));
  Tensor wf(w.shape(), std::vector<float>(w.data().begin(), w.data().end()));
  Tensor yf = Conv2d(ftape, xf, wf, Tensor(), {});
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(yf.data()[i], expected[i], 1e-5 * std::max(1.0, std::abs(expected[i])));
  }
}

struct ConvCase {
  testing::NaiveConvArgs args;
  bool bias;
};

TEST(Conv2dTest, MatchesNaiveLoopAcrossGeometries) {
  const std::vector<ConvCase> cases = {
      {{2, 3, 7, 6, 4, 3, 3, 2, 2, 1, 1, 1}, true},
      {{1, 4, 6, 6, 8, 1, 1, 1, 1, 0, 0, 1}, true},   // pointwise fast path
      {{1, 4, 6, 6, 4, 3, 3, 1, 1, 1, 1, 4}, true},   // depthwise
      {{1, 4, 5, 5, 8, 3, 3, 1, 1, 1, 1, 2}, false},  // grouped
      {{1, 2, 9, 9, 3, 5, 3, 2, 1, 2, 0, 1}, true},   // asymmetric
      {{1, 3, 6, 6, 3, 1, 1, 2, 2, 0, 0, 1}, false},  // strided pointwise
  };
  int seed = 0;
  for (const ConvCase& c : cases) {
    const auto& a = c.args;
    Tensor64 x = RandomTensor64(Shape{a.n, a.cin, a.h, a.w}, 100 + seed);
    Tensor64 w = RandomTensor64(Shape{a.cout, a.cin / a.groups, a.kh, a.kw}, 200 + seed);
    Tensor64 b = c.bias ? RandomTensor64(Shape{a.cout}, 300 + seed) : Tensor64();
    ++seed;
    Tape64 tape = Tape64::Inference();
    Tensor64 y = Conv2d(tape, x, w, b, {{a.sh, a.sw}, {a.ph, a.pw}, a.groups});
    auto expected = testing::NaiveConv2d(ToVector(x), ToVector(w),
                                         c.bias ? ToVector(b) : std::vector<double>{}, a);
    ASSERT_EQ(static_cast<std::size_t>(y.numel()), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      ASSERT_NEAR(y.data()[i], expected[i], 1e-12) << "case " << seed;
    }
  }
}

TEST(Conv2dTest, DepthwiseEqualsPerChannelConvolution) {
  const int c = 3;
  Tensor64 x = RandomTensor64(Shape{2, c, 6, 5}, 41);
  Tensor64 w = RandomTensor64(Shape{c, 1, 3, 3}, 42);
  Tape64 tape = Tape64::Inference();
  Tensor64 y = Conv2d(tape, x, w, Tensor64(), {{1, 1}, {1, 1}, c});
  for (int ch = 0; ch < c; ++ch) {
    std::vector<double> xs, ws(w.data().begin() + ch * 9, w.data().begin() + (ch + 1) * 9);
    for (int n = 0; n < 2; ++n) {
      auto begin = x.data().begin() + (n * c + ch) * 30;
      xs.insert(xs.end(), begin, begin + 30);
    }
    Tensor64 xc(Shape{2, 1, 6, 5}, xs);
    Tensor64 wc(Shape{1, 1, 3, 3}, ws);
    Tensor64 yc = Conv2d(tape, xc, wc, Tensor64(), {{1, 1}, {1, 1}, 1});
    for (int n = 0; n < 2; ++n) {
      for (int i = 0; i < 30; ++i) {
        EXPECT_DOUBLE_EQ(y.data()[(n * c + ch) * 30 + i], yc.data()[n * 30 + i]);
      }
    }
  }
}

TEST(Conv2dTest, ShapeErrorsNameTheDimension) {
  Tape tape = Tape::Inference();
  try {
    Conv2d(tape, Tensor(Shape{1, 3, 4, 4}), Tensor(Shape{2, 2, 3, 3}), Tensor(), {});
    FAIL() << "expected shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("weight dim 1"), std::string::npos);
  }
  try {
    Conv2d(tape, Tensor(Shape{1, 3, 4, 4}), Tensor(Shape{4, 1, 3, 3}), Tensor(),
           {{1, 1}, {0, 0}, 2});
    FAIL() << "expected groups error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("dim 1"), std::string::npos);
  }
  EXPECT_THROW(Conv2d(tape, Tensor(Shape{1, 1, 2, 2}), Tensor(Shape{1, 1, 3, 3}),
                      Tensor(), {}),
               Error);
  EXPECT_THROW(Conv2d(tape, Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{1, 1, 3, 3}),
                      Tensor(Shape{2}), {}),
               Error);
}

TEST(PointwiseTest, ReluValuesAndGradient) {
  Tape tape;
  Tensor x(Shape{2}, {1.0f, -1.0f});
  x.set_requires_grad(true);
  Tensor y = Relu(tape, x);
  EXPECT_EQ(y.data()[0], 1.0f);
  EXPECT_EQ(y.data()[1], 0.0f);
  tape.Backward(Sum(tape, y));
  EXPECT_EQ(x.grad()[0], 1.0f);
  EXPECT_EQ(x.grad()[1], 0.0f);
}

TEST(PointwiseTest, ReluSubgradientAtZeroIsZero) {
  Tape tape;
  Tensor x(Shape{1}, {0.0f});
  x.set_requires_grad(true);
  tape.Backward(Sum(tape, Relu(tape, x)));
  EXPECT_EQ(x.grad()[0], 0.0f);
}

TEST(PointwiseTest, SigmoidValues) {
  Tape tape = Tape::Inference();
  EXPECT_EQ(Sigmoid(tape, Tensor(Shape{1}, {0.0f})).item(), 0.5f);
  Tape64 tape64 = Tape64::Inference();
  const double big = Sigmoid(tape64, Tensor64(Shape{1}, {40.0})).item();
  const double stable = 1.0 / (1.0 + std::exp(-40.0));
  EXPECT_NEAR(big, stable, 1e-12);
  EXPECT_NEAR(big, 1.0, 1e-12);
  const double very_negative = Sigmoid(tape64, Tensor64(Shape{1}, {-800.0})).item();
  EXPECT_TRUE(std::isfinite(very_negative));
  EXPECT_GE(very_negative, 0.0);
}

TEST(SoftmaxTest, Examples) {
  Tape64 tape = Tape64::Inference();
  Tensor64 a = Softmax(tape, Tensor64(Shape{1, 2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(a.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(a.data()[1], 0.5);
  Tensor64 b = Softmax(tape, Tensor64(Shape{1, 2}, {1000.0, 0.0}));
  EXPECT_NEAR(b.data()[0], 1.0, 1e-12);
  EXPECT_NEAR(b.data()[1], 0.0, 1e-12);
  Tape ftape = Tape::Inference();
  Tensor r = Softmax(ftape, RandomTensor(Shape{1, 5}, 3));
  double s = 0.0;
  for (float v : r.data()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(SoftmaxTest, RowsSumToOneForLargeMagnitudes) {
  Tape tape = Tape::Inference();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor x = RandomTensor(Shape{4, 7}, seed, -1000.0f, 1000.0f);
    Tensor y = Softmax(tape, x);
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) s += y.data()[r * 7 + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(BatchNormTest, ConstantInputMapsToBeta) {
  Tape tape = Tape::Inference();
  auto state = BatchNormState<float>::Fresh(2);
  Tensor gamma(Shape{2}, {1.5f, -2.0f});
  Tensor beta(Shape{2}, {0.25f, 3.0f});
  Tensor y = BatchNorm2d(tape, Tensor::Full(Shape{3, 2, 4, 4}, 7.0f), gamma, beta,
                         state, Mode::kTrain);
  for (int n = 0; n < 3; ++n) {
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 16; ++i) {
        EXPECT_FLOAT_EQ(y.data()[(n * 2 + c) * 16 + i], beta.data()[c]);
      }
    }
  }
}

TEST(BatchNormTest, TrainModeOutputHasZeroChannelMean) {
  Tape tape = Tape::Inference();
  auto state = BatchNormState<float>::Fresh(3);
  Tensor y = BatchNorm2d(tape, RandomTensor(Shape{4, 3, 5, 5}, 8, -3.0f, 5.0f),
                         Tensor::Full(Shape{3}, 1.0f), Tensor::Full(Shape{3}, 0.0f),
                         state, Mode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) s += y.data()[(n * 3 + c) * 25 + i];
    EXPECT_NEAR(s / 100.0, 0.0, 1e-5);
  }
}

TEST(BatchNormTest, RunningStatsUseMomentum) {
  Tape64 tape = Tape64::Inference();
  auto state = BatchNormState<double>::Fresh(1);
  Tensor64 x(Shape{2, 1, 1, 2}, {1.0, 2.0, 3.0, 4.0});
  BatchNorm2d(tape, x, Tensor64::Full(Shape{1}, 1.0), Tensor64::Full(Shape{1}, 0.0),
              state, Mode::kTrain);
  // mean 2.5, unbiased var 5/3.
  EXPECT_NEAR(state.running_mean.data()[0], 0.1 * 2.5, 1e-12);
  EXPECT_NEAR(state.running_var.data()[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
  EXPECT_TRUE(state.has_statistics);
}

std::vector<std::string>* g_warnings = nullptr;
void CaptureWarning(std::string_view m) { g_warnings->emplace_back(m); }

TEST(BatchNormTest, EvalBeforeTrainingWarnsAndUsesInitialStats) {
  std::vector<std::string> warnings;
  g_warnings = &warnings;
  SetWarningSink(&CaptureWarning);
  Tape tape = Tape::Inference();
  auto state = BatchNormState<float>::Fresh(1);
  Tensor x(Shape{1, 1, 1, 2}, {2.0f, -4.0f});
  Tensor y = BatchNorm2d(tape, x, Tensor::Full(Shape{1}, 1.0f),
                         Tensor::Full(Shape{1}, 0.0f), state, Mode::kEval);
  BatchNorm2d(tape, x, Tensor::Full(Shape{1}, 1.0f), Tensor::Full(Shape{1}, 0.0f), state,
              Mode::kEval);
  SetWarningSink(nullptr);
  ASSERT_EQ(warnings.size(), 1u);  // once per state
  const float scale = static_cast<float>(1.0 / std::sqrt(1.0 + 1e-5));
  EXPECT_FLOAT_EQ(y.data()[0], 2.0f * scale);
  EXPECT_FLOAT_EQ(y.data()[1], -4.0f * scale);
}

TEST(ReduceTest, GlobalAvgPoolOfOnes) {
  Tape tape = Tape::Inference();
  Tensor y = Reduce(tape, Tensor::Full(Shape{1, 2, 4, 4}, 1.0f),
                    ReduceKind::kGlobalAvgPool);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 1, 1}));
  for (float v : y.data()) EXPECT_EQ(v, 1.0f);
}

TEST(ReduceTest, MaxPoolRoutesGradientToArgmax) {
  Tape tape;
  Tensor x(Shape{1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  x.set_requires_grad(true);
  Tensor y = Reduce(tape, x, ReduceKind::kMaxPool, {2, 2, false});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 4.0f);
  tape.Backward(Sum(tape, y));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()),
            (std::vector<float>{0, 0, 0, 1}));
}

TEST(ReduceTest, MaxPoolTiesBreakToFirstIndex) {
  Tape tape;
  Tensor x = Tensor::Full(Shape{1, 1, 2, 2}, 3.0f);
  x.set_requires_grad(true);
  tape.Backward(Sum(tape, MaxPool2d(tape, x, {2, 2, false})));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()),
            (std::vector<float>{1, 0, 0, 0}));
}

TEST(ReduceTest, MaxPoolMatchesNaiveLoop) {
  Tensor64 x = RandomTensor64(Shape{1, 1, 6, 6}, 21);
  Tape64 tape = Tape64::Inference();
  Tensor64 y = MaxPool2d(tape, x, {2, 2, false});
  auto expected = testing::NaiveMaxPool(ToVector(x), 1, 1, 6, 6, 2, 2);
  ASSERT_EQ(static_cast<std::size_t>(y.numel()), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(y.data()[i], expected[i]);
  }
}

TEST(ReduceTest, CeilModeKeepsPartialWindow) {
  Tape tape = Tape::Inference();
  Tensor y = MaxPool2d(tape, RandomTensor(Shape{1, 1, 5, 5}, 4), {2, 2, true});
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
}

TEST(ReduceTest, WindowLargerThanInputFails) {
  Tape tape = Tape::Inference();
  try {
    MaxPool2d(tape, Tensor(Shape{1, 1, 2, 2}), {3, 1, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(FullyConnectedTest, IdentityWeightsReturnInput) {
  Tape tape = Tape::Inference();
  Tensor x = RandomTensor(Shape{3, 4}, 5);
  Tensor w(Shape{4, 4});
  for (int i = 0; i < 4; ++i) w.data()[i * 4 + i] = 1.0f;
  Tensor y = FullyConnected(tape, x, w, Tensor(Shape{4}));
  for (int i = 0; i < 12; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(FullyConnectedTest, ZeroWeightsGiveBias) {
  Tape tape = Tape::Inference();
  Tensor b(Shape{2}, {0.5f, -1.5f});
  Tensor y = FullyConnected(tape, RandomTensor(Shape{3, 4}, 6), Tensor(Shape{2, 4}), b);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(y.data()[i * 2], 0.5f);
    EXPECT_EQ(y.data()[i * 2 + 1], -1.5f);
  }
}

TEST(FullyConnectedTest, MatchesNaiveLoopSeed11) {
  Tensor64 x = RandomTensor64(Shape{4, 6}, 11);
  Tensor64 w = RandomTensor64(Shape{3, 6}, 12);
  Tensor64 b = RandomTensor64(Shape{3}, 13);
  Tape64 tape = Tape64::Inference();
  Tensor64 y = FullyConnected(tape, x, w, b);
  auto expected = testing::NaiveFullyConnected(ToVector(x), ToVector(w), ToVector(b), 4, 6, 3);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(y.data()[i], expected[i], 1e-6 * std::max(1.0, std::abs(expected[i])));
  }
}

TEST(FullyConnectedTest, ShapeMismatchFails) {
  Tape tape = Tape::Inference();
  EXPECT_THROW(FullyConnected(tape, Tensor(Shape{2, 3}), Tensor(Shape{2, 4}),
                              Tensor(Shape{2})),
               Error);
}

TEST(BackwardTest, SumGivesOnes) {
  Tape tape;
  Tensor x = RandomTensor(Shape{2, 3, 4}, 1);
  x.set_requires_grad(true);
  tape.Backward(Sum(tape, x));
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(BackwardTest, SquareGivesTwoX) {
  Tape tape;
  Tensor x(Shape{1}, {3.0f});
  x.set_requires_grad(true);
  tape.Backward(Sum(tape, Mul(tape, x, x)));
  EXPECT_EQ(x.grad()[0], 6.0f);
}

TEST(BackwardTest, FanOutSumsGradients) {
  Tape tape;
  Tensor x(Shape{2}, {1.0f, 2.0f});
  x.set_requires_grad(true);
  Tensor y = Add(tape, Scale(tape, x, 3.0f), Relu(tape, x));
  tape.Backward(Sum(tape, y));
  EXPECT_EQ(x.grad()[0], 4.0f);
  EXPECT_EQ(x.grad()[1], 4.0f);
}

TEST(BackwardTest, NonScalarLossFails) {
  Tape tape;
  Tensor x = RandomTensor(Shape{2}, 1);
  x.set_requires_grad(true);
  Tensor y = Relu(tape, x);
  try {
    tape.Backward(y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(BackwardTest, UnreachableLossFails) {
  Tape tape;
  EXPECT_THROW(tape.Backward(Tensor::Scalar(1.0f)), Error);
}

TEST(BackwardTest, TapeIsTopologicallyOrdered) {
  Tape tape;
  Tensor x = RandomTensor(Shape{1, 2, 4, 4}, 3);
  x.set_requires_grad(true);
  Tensor w = RandomTensor(Shape{2, 2, 3, 3}, 4);
  Tensor h = Relu(tape, Conv2d(tape, x, w, Tensor(), {{1, 1}, {1, 1}, 1}));
  Tensor out = Sum(tape, Add(tape, h, Sigmoid(tape, h)));
  ASSERT_GT(tape.size(), 3u);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    for (const Tensor& in : tape.entry(i).inputs) {
      if (!in.defined()) continue;
      for (std::size_t j = i; j < tape.size(); ++j) {
        EXPECT_FALSE(tape.entry(j).output.SameStorage(in))
            << "entry " << i << " consumes a later output";
      }
    }
  }
  tape.Backward(out);
  EXPECT_TRUE(x.has_grad());
}

TEST(BackwardTest, InferenceTapeRecordsNothing) {
  Tape tape = Tape::Inference();
  Tensor x = RandomTensor(Shape{3}, 1);
  x.set_requires_grad(true);
  Relu(tape, x);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(SgdTest, PlainStep) {
  Tensor theta(Shape{1}, {1.0f});
  theta.mutable_grad()[0] = 1.0f;
  Sgd<float> sgd(0.1, 0.0);
  std::vector<Tensor> params{theta};
  sgd.Step(params);
  EXPECT_FLOAT_EQ(theta.data()[0], 0.9f);
}

TEST(SgdTest, MomentumTwoSteps) {
  Tensor64 theta(Shape{1}, {1.0});
  std::vector<Tensor64> params{theta};
  Sgd<double> sgd(0.1, 0.9);
  theta.mutable_grad()[0] = 1.0;
  sgd.Step(params);
  EXPECT_NEAR(theta.data()[0], 0.9, 1e-15);
  sgd.Step(params);
  EXPECT_NEAR(theta.data()[0], 0.71, 1e-15);
}

TEST(SgdTest, ZeroGradLeavesParameterUnchanged) {
  Tensor theta(Shape{2}, {1.0f, -2.0f});
  theta.mutable_grad();
  std::vector<Tensor> params{theta};
  Sgd<float> sgd(0.5, 0.0);
  sgd.Step(params);
  EXPECT_EQ(theta.data()[0], 1.0f);
  EXPECT_EQ(theta.data()[1], -2.0f);
}

TEST(SgdTest, NanGradientAbortsWithoutMutation) {
  Tensor a(Shape{1}, {1.0f});
  Tensor b(Shape{1}, {2.0f});
  a.mutable_grad()[0] = 1.0f;
  b.mutable_grad()[0] = std::numeric_limits<float>::quiet_NaN();
  std::vector<Tensor> params{a, b};
  Sgd<float> sgd(0.1, 0.0);
  try {
    sgd.Step(params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
  EXPECT_EQ(a.data()[0], 1.0f);
}

TEST(SgdTest, RejectsBadHyperparameters) {
  EXPECT_THROW(Sgd<float>(0.0, 0.0), Error);
  EXPECT_THROW(Sgd<float>(0.1, 1.0), Error);
}

TEST(DeterminismTest, ForwardIsBitIdenticalAcrossRuns) {
  auto run = [] {
    Tape tape = Tape::Inference();
    Tensor x = RandomTensor(Shape{2, 4, 9, 9}, 77);
    Tensor w = RandomTensor(Shape{6, 4, 3, 3}, 78);
    Tensor y = Conv2d(tape, x, w, RandomTensor(Shape{6}, 79), {{2, 2}, {1, 1}, 1});
    auto s = BatchNormState<float>::Fresh(6);
    y = BatchNorm2d(tape, y, Tensor::Full(Shape{6}, 1.0f), Tensor(Shape{6}), s,
                    Mode::kTrain);
    return Softmax(tape, Flatten(tape, GlobalAvgPool(tape, y)));
  };
  Tensor a = run();
  Tensor b = run();
  ASSERT_EQ(a.numel(), b.numel());
  EXPECT_EQ(std::memcmp(a.raw(), b.raw(), sizeof(float) * a.numel()), 0);
}

// ---- finite-difference checks, >= 10 seeds per op ----

void ExpectGradOk(const testing::LossFn& fn, std::vector<Tensor64> wrt,
                  const std::string& label) {
  auto r = CheckGradients(fn, std::move(wrt));
  EXPECT_LT(r.max_rel_error, kMaxRelError) << label << " worst " << r.worst;
  EXPECT_GT(r.checked, 0);
}

TEST(GradCheckTest, Conv2dAllOperands) {
  const std::vector<std::pair<Shape, Conv2dOptions>> cfgs = {
      {Shape{3, 2, 3, 3}, {{1, 1}, {1, 1}, 1}},
      {Shape{4, 1, 3, 3}, {{2, 2}, {1, 1}, 2}},
      {Shape{2, 1, 3, 3}, {{1, 1}, {1, 1}, 2}},  // depthwise
      {Shape{5, 2, 1, 1}, {{1, 1}, {0, 0}, 1}},  // pointwise fast path
  };
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto& [wshape, opt] = cfgs[seed % cfgs.size()];
    Tensor64 x = RandomTensor64(Shape{2, 2, 5, 6}, seed);
    Tensor64 w = RandomTensor64(wshape, seed + 50);
    Tensor64 b = RandomTensor64(Shape{wshape[0]}, seed + 90);
    ExpectGradOk(
        [&](Tape64& t) { return ProjectToScalar(t, Conv2d(t, x, w, b, opt), seed); },
        {x, w, b}, "conv seed " + std::to_string(seed));
  }
}

TEST(GradCheckTest, PointwiseMaps) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Tensor64 x = RandomTensor64(Shape{2, 3, 4}, seed, -3.0, 3.0);
    ExpectGradOk([&](Tape64& t) { return ProjectToScalar(t, Relu(t, x), seed); },
                 {x}, "relu");
    ExpectGradOk([&](Tape64& t) { return ProjectToScalar(t, Sigmoid(t, x), seed); },
                 {x}, "sigmoid");
  }
}

TEST(GradCheckTest, Softmax) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Tensor64 x = RandomTensor64(Shape{3, 5}, seed, -4.0, 4.0);
    ExpectGradOk([&](Tape64& t) { return ProjectToScalar(t, Softmax(t, x), seed); },
                 {x}, "softmax");
  }
}

TEST(GradCheckTest, BatchNormTrainAndEval) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Tensor64 x = RandomTensor64(Shape{3, 2, 3, 4}, seed, -2.0, 2.0);
    Tensor64 gamma = RandomTensor64(Shape{2}, seed + 10, 0.5, 1.5);
    Tensor64 beta = RandomTensor64(Shape{2}, seed + 20);
    ExpectGradOk(
        [&](Tape64& t) {
          auto state = BatchNormState<double>::Fresh(2);
          return ProjectToScalar(t, BatchNorm2d(t, x, gamma, beta, state, Mode::kTrain),
                                 seed);
        },
        {x, gamma, beta}, "bn train");
    auto eval_state = BatchNormState<double>::Fresh(2);
    eval_state.running_mean = RandomTensor64(Shape{2}, seed + 30);
    eval_state.running_var = RandomTensor64(Shape{2}, seed + 40, 0.5, 2.0);
    eval_state.has_statistics = true;
    ExpectGradOk(
        [&](Tape64& t) {
          return ProjectToScalar(
              t, BatchNorm2d(t, x, gamma, beta, eval_state, Mode::kEval), seed);
        },
        {x, gamma, beta}, "bn eval");
  }
}

TEST(GradCheckTest, Pools) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Tensor64 x = RandomTensor64(Shape{2, 2, 5, 6}, seed);
    ExpectGradOk([&](Tape64& t) { return ProjectToScalar(t, GlobalAvgPool(t, x), seed); },
                 {x}, "gap");
    ExpectGradOk(
        [&](Tape64& t) {
          return ProjectToScalar(t, MaxPool2d(t, x, {2, 2, seed % 2 == 0}), seed);
        },
        {x}, "maxpool");
  }
}

TEST(GradCheckTest, FullyConnected) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Tensor64 x = RandomTensor64(Shape{3, 7}, seed);
    Tensor64 w = RandomTensor64(Shape{4, 7}, seed + 1);
    Tensor64 b = RandomTensor64(Shape{4}, seed + 2);
    ExpectGradOk(
        [&](Tape64& t) { return ProjectToScalar(t, FullyConnected(t, x, w, b), seed); },
        {x, w, b}, "fc");
  }
}

TEST(GradCheckTest, ElementwiseAndReshapeOps) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Tensor64 a = RandomTensor64(Shape{2, 3, 3, 5}, seed);
    Tensor64 b = RandomTensor64(Shape{2, 3, 3, 5}, seed + 1);
    Tensor64 s = RandomTensor64(Shape{3}, seed + 2);
    ExpectGradOk(
        [&](Tape64& t) {
          Tensor64 y = Add(t, Mul(t, a, b), ScaleChannels(t, a, s));
          y = UpsampleNearest2x(t, y, 5, 9);
          return ProjectToScalar(t, Flatten(t, Scale(t, y, 0.7)), seed);
        },
        {a, b, s}, "elementwise");
  }
}

}  // namespace
}  // namespace cforge
