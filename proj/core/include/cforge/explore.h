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

#ifndef CFORGE_EXPLORE_H_
#define CFORGE_EXPLORE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cforge/arch.h"
#include "cforge/cost.h"
#include "cforge/random.h"
#include "cforge/synth.h"
#include "cforge/train.h"

namespace cforge {

struct NetScoreWeights {
  double alpha = 2.0;  // accuracy
  double beta = 0.5;   // parameters
  double gamma = 0.5;  // FLOPs
};

// 20 * log10(acc^alpha / (params_m^beta * flops_m^gamma)). Accuracy in
// percent, params and FLOPs in millions. Throws Error(kInvalidArgument) on a
// non-positive input or weight.
double NetScore(double acc_pct, double params_m, double flops_m,
                const NetScoreWeights& weights = {});

struct SearchConfig {
  // Every proxy evaluation trains once per seed and averages. The first
  // seed also drives mutation.
  std::vector<std::uint64_t> seeds = {0};
  std::int64_t budget_flops = kDefaultFlopBudget;
  int iterations = 20;
  int population = 8;
  int elite = 2;
  int proxy_epochs = 3;
  NetScoreWeights weights;
  // Optimizer settings for proxy training; epochs and seed are overridden.
  TrainConfig proxy_train;

  void Validate() const;  // throws Error(kInvalidArgument)
};

struct Candidate {
  ArchSpec spec;
  std::string text;  // PrintArch(spec)
  CostReport cost;
  FeasibilityReport feasibility;
  std::optional<double> proxy_acc;  // set once evaluated
  std::optional<double> u_value;    // feasible, evaluated and not diverged
  bool diverged = false;
  int iteration = 0;
};

// Deterministic residual prototype: input conv (stride 2 when the input is at
// least 16x16), then resblock / aads stages, gap and a two-class dual head.
ArchSpec SeedPrototype(const FeatureShape& input);

enum class MutationKind {
  kInsertAcond,
  kInsertResblock,
  kRemoveResblock,
  kWiden,
  kNarrow,
  kAddAads,
  kRemoveAads,
  kAddCrossColumnEdge,
  kRemoveCrossColumnEdge,
  kDuplicateColumn,
};

inline constexpr int kMutationKinds = 10;

std::string_view MutationKindName(MutationKind kind);

// One mutation of the given kind with sites drawn from rng, followed by the
// join repair pass. nullopt when the kind has no applicable site or the
// result does not shape-check.
std::optional<ArchSpec> ApplyMutation(const ArchSpec& spec, MutationKind kind, Rng& rng);

// Exactly one random mutation. Retries up to 20 times; returns the input
// unchanged if every attempt fails.
ArchSpec Mutate(const ArchSpec& spec, std::uint64_t seed);

// Inserts pwconv / aads adapters on join edges until every join agrees in
// shape. Returns false if some join cannot be repaired.
bool RepairJoins(ArchSpec& spec);

struct ProxyResult {
  double accuracy = 0.0;  // percent on data.test
  bool diverged = false;
};

// Compiles with `seed`, trains on data.train for `epochs` epochs and
// evaluates on data.test. Non-finite training loss yields accuracy 0 with
// the diverged flag.
ProxyResult ProxyEvaluate(const ArchSpec& spec, const DatasetSplit& data, int epochs,
                          std::uint64_t seed, const TrainConfig& train = {});

struct SearchResult {
  std::vector<Candidate> ranked;  // distinct evaluated candidates, U descending
  std::vector<Candidate> log;     // every generated candidate, in order
  std::vector<std::optional<double>> best_u;  // best-so-far U after each iteration
};

// Evolutionary refinement: generation 0 is the prototype plus mutants of it;
// later generations are the elites plus mutants of the elites. Infeasible
// candidates are logged but never trained and never become elites.
SearchResult Explore(const SearchConfig& cfg, const DatasetSplit& data,
                     const std::function<void(int iteration, const SearchResult&)>&
                         on_iteration = {});

// One JSON object (no trailing newline) per log entry.
std::string CandidateRecord(const Candidate& c, const std::optional<double>& best_u);

}  // namespace cforge

#endif  // CFORGE_EXPLORE_H_
