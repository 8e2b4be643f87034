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

#ifndef CFORGE_SYNTH_H_
#define CFORGE_SYNTH_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cforge {

enum class DefectKind { kScratch, kBrightSpot, kDarkSpot, kImpurity };

std::string_view DefectKindName(DefectKind kind);
std::optional<DefectKind> DefectKindFromName(std::string_view name);

struct GenConfig {
  std::int64_t count = 822;
  double defect_fraction = 422.0 / 822.0;
  int height = 64;
  int width = 64;
  double pitch_min = 5.0;  // dot lattice pitch, pixels
  double pitch_max = 9.0;
  double gradient_min = 10.0;  // brightness change across the plate, gray levels
  double gradient_max = 50.0;
  double noise_sigma = 2.0;
  double amplitude_min = 8.0;  // defect contrast band, gray levels
  double amplitude_max = 24.0;
  std::uint64_t seed = 0;

  void Validate() const;  // throws Error(kInvalidArgument)
};

struct PlateSample {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  bool defective = false;
  std::uint64_t seed = 0;
  std::vector<DefectKind> defects;
};

struct Dataset {
  GenConfig config;
  std::vector<PlateSample> samples;
};

// Base plate (dot lattice, brightness gradient, sensor noise) with the given
// defects composited on top. The base, defect and noise draws come from
// separate streams of `seed`, so rendering with no defects yields the exact
// defect-free twin of a defective plate.
PlateSample RenderPlate(std::uint64_t seed, const GenConfig& cfg,
                        const std::vector<DefectKind>& defects);

// Exactly round(count * defect_fraction) defective plates; each defective
// plate gets one or two defect kinds. Sample seeds derive from cfg.seed.
Dataset GenerateDataset(const GenConfig& cfg);

struct DatasetSplit {
  std::vector<PlateSample> train;
  std::vector<PlateSample> test;
};

// Stratified by label: floor(n_class * train_fraction) of each class goes to
// train. Throws Error(kInvalidArgument) if a class would leave a side empty.
DatasetSplit SplitDataset(const std::vector<PlateSample>& samples, double train_fraction,
                          std::uint64_t seed);

// Binary PGM (P5, maxval 255) per sample plus manifest.json.
void WriteDataset(const Dataset& dataset, const std::string& dir);
Dataset ReadDataset(const std::string& dir);

std::string EncodePgm(const PlateSample& sample);
// Throws Error(kFormat) naming `name` when the bytes are not a valid P5 image.
PlateSample DecodePgm(const std::string& bytes, const std::string& name);

std::string SampleFileName(std::size_t index);

}  // namespace cforge

#endif  // CFORGE_SYNTH_H_
