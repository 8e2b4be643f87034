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

#include <benchmark/benchmark.h>

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "cforge/arch.h"
#include "cforge/blocks.h"
#include "cforge/cost.h"
#include "cforge/graph.h"
#include "cforge/ops.h"
#include "cforge/synth.h"
#include "cforge/train.h"

namespace cforge {
namespace {

Tensor Noise(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(static_cast<std::size_t>(n));
  for (float& x : v) x = dist(rng);
  return Tensor(shape, std::move(v));
}

ArchSpec Reference() {
  std::ifstream in(std::string(CFORGE_SOURCE_DIR) + "/archs/reference.arch");
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseArch(ss.str());
}

void BM_Conv3x3(benchmark::State& state) {
  const std::int64_t c = state.range(0);
  const Tensor x = Noise({10, c, 32, 32}, 1);
  const Tensor w = Noise({c, c, 3, 3}, 2);
  const Tensor b = Noise({c}, 3);
  Conv2dOptions opt;
  opt.pad = {1, 1};
  for (auto _ : state) {
    Tape tape = Tape::Inference();
    benchmark::DoNotOptimize(Conv2d(tape, x, w, b, opt));
  }
  state.SetItemsProcessed(state.iterations() * 10 * c * c * 9 * 32 * 32);
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(16)->Arg(32);

void BM_AadsDownsample(benchmark::State& state) {
  const Tensor x = Noise({10, 16, 64, 64}, 4);
  for (auto _ : state) {
    Tape tape = Tape::Inference();
    benchmark::DoNotOptimize(AadsDownsample(tape, x, 3));
  }
}
BENCHMARK(BM_AadsDownsample);

void BM_ReferenceForward(benchmark::State& state) {
  FloatGraph graph = FloatGraph::Compile(Reference(), 0);
  const Tensor x = Noise({state.range(0), 1, 64, 64}, 5);
  for (auto _ : state) {
    Tape tape = Tape::Inference();
    benchmark::DoNotOptimize(graph.Forward(tape, x, Mode::kEval).output);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReferenceForward)->Arg(1)->Arg(10);

void BM_ReferenceTrainEpoch(benchmark::State& state) {
  GenConfig gen;
  gen.count = 20;
  const Dataset data = GenerateDataset(gen);
  TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) {
    FloatGraph graph = FloatGraph::Compile(Reference(), 0);
    benchmark::DoNotOptimize(Train(graph, data.samples, cfg));
  }
  state.SetItemsProcessed(state.iterations() * gen.count);
}
BENCHMARK(BM_ReferenceTrainEpoch)->Unit(benchmark::kMillisecond);

void BM_CostAndConstraints(benchmark::State& state) {
  const ArchSpec spec = Reference();
  for (auto _ : state) {
    benchmark::DoNotOptimize(ComputeCost(spec));
    benchmark::DoNotOptimize(ValidateConstraints(spec));
  }
}
BENCHMARK(BM_CostAndConstraints);

void BM_RenderPlate(benchmark::State& state) {
  GenConfig gen;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(RenderPlate(seed++, gen, {DefectKind::kScratch}));
  }
}
BENCHMARK(BM_RenderPlate);

}  // namespace
}  // namespace cforge

BENCHMARK_MAIN();
