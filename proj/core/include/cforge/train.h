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

#ifndef CFORGE_TRAIN_H_
#define CFORGE_TRAIN_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cforge/graph.h"
#include "cforge/synth.h"
#include "cforge/tape.h"
#include "cforge/tensor.h"

namespace cforge {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 5;
  double lr = 1e-3;
  double momentum = 0.0;
  double lambda_d = 0.1;
  std::uint64_t seed = 0;

  void Validate() const;  // throws Error(kInvalidArgument)
};

inline constexpr double kCrossEntropyEpsilon = 1e-9;

// L = CE(agg,y) + CE(p1,y)/2 + CE(p2,y)/2 - lambda_d * mean_n |p1 - p2|_1
// with probabilities clamped below at 1e-9 inside the logs. Inputs are
// [N,K] probability rows; labels holds class indices.
template <typename T>
BasicTensor<T> DiscrepancyLoss(BasicTape<T>& tape, const BasicTensor<T>& p1,
                               const BasicTensor<T>& p2, const BasicTensor<T>& agg,
                               const std::vector<int>& labels, double lambda_d);

// Mean over rows of |p1 - p2|_1.
double MeanHeadDiscrepancy(std::span<const float> p1, std::span<const float> p2,
                           std::int64_t classes);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;            // mean over batches
  double train_accuracy = 0.0;  // percent, from the training forward passes
};

struct Metrics {
  std::int64_t count = 0;
  double accuracy = 0.0;  // percent
  std::vector<double> per_class_accuracy;            // percent; NaN if class absent
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  double mean_discrepancy = 0.0;
  std::vector<EpochStats> history;
};

// Class index of the largest probability; ties go to the lower index.
int ArgMax(std::span<const float> row);

// Gray levels per unit of network input.
inline constexpr double kPixelScale = 32.0;

// [N,1,H,W] network input for the listed samples: each plate minus its
// least-squares brightness plane, divided by kPixelScale.
Tensor ImageBatch(const std::vector<PlateSample>& samples, const std::vector<std::size_t>& idx);

// Seeded-shuffle SGD over the training set. Each step: forward in train
// mode, discrepancy loss, backward, optimizer step. Throws Error(kNumeric)
// with epoch/batch context if the loss becomes non-finite.
std::vector<EpochStats> Train(FloatGraph& graph, const std::vector<PlateSample>& train,
                              const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

// Per-batch class probabilities, [N,K] row-major.
struct Prediction {
  std::int64_t classes = 0;
  std::vector<float> agg;
  std::vector<float> p1;
  std::vector<float> p2;
};

// Anything that maps an image batch to class probabilities.
using Classifier = std::function<Prediction(const Tensor& images)>;

// Eval-mode, gradient-free forward of a dual-head graph.
Classifier GraphClassifier(FloatGraph& graph);

Metrics Evaluate(const Classifier& model, const std::vector<PlateSample>& samples,
                 int batch_size = 32);
Metrics Evaluate(FloatGraph& graph, const std::vector<PlateSample>& samples);

// Fraction of (sample, shift) pairs whose predicted class under a circular
// shift by (dy,dx), 0 < max(|dy|,|dx|) <= max_shift, equals the unshifted one.
// The shift is applied to the network input (see ImageBatch).
double ShiftConsistency(const Classifier& model, const std::vector<PlateSample>& samples,
                        int max_shift);

struct LatencyStats {
  int batch_size = 0;
  int reps = 0;
  double median_ms_per_sample = 0.0;
  double p90_ms_per_sample = 0.0;
  std::string environment;
};

LatencyStats BenchLatency(FloatGraph& graph, int batch_size, int warmup, int reps);

std::string EnvironmentDescriptor();

}  // namespace cforge

#endif  // CFORGE_TRAIN_H_
