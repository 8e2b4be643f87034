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

#include "cforge/explore.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cforge/error.h"
#include "cforge/graph.h"
#include "json.hpp"

namespace cforge {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kMutationRetries = 20;

std::string NewId(const ArchSpec& spec, std::string_view prefix) {
  for (int n = 0;; ++n) {
    std::string id = std::string(prefix) + "_" + std::to_string(n);
    if (!spec.HasId(id)) return id;
  }
}

int ColumnOf(const ArchSpec& spec, const std::string& id) {
  for (std::size_t i = 0; i < spec.columns.size(); ++i) {
    const auto& col = spec.columns[i];
    if (std::find(col.begin(), col.end(), id) != col.end()) return static_cast<int>(i);
  }
  return -1;
}

// Places `id` in the column of `anchor`, right after it.
void JoinColumnAfter(ArchSpec& spec, const std::string& anchor, const std::string& id) {
  const int c = ColumnOf(spec, anchor);
  if (c < 0) return;
  auto& col = spec.columns[c];
  col.insert(std::find(col.begin(), col.end(), anchor) + 1, id);
}

void DropFromColumns(ArchSpec& spec, const std::string& id) {
  for (auto& col : spec.columns) col.erase(std::remove(col.begin(), col.end(), id), col.end());
  spec.columns.erase(std::remove_if(spec.columns.begin(), spec.columns.end(),
                                    [](const auto& col) { return col.empty(); }),
                     spec.columns.end());
}

void SortEdges(ArchSpec& spec) {
  std::sort(spec.edges.begin(), spec.edges.end());
  spec.edges.erase(std::unique(spec.edges.begin(), spec.edges.end()), spec.edges.end());
}

// New node takes over every outgoing edge of `anchor`.
std::string InsertAfter(ArchSpec& spec, const std::string& anchor, OpKind op, HyperParams hp) {
  const std::string id = NewId(spec, OpKindName(op));
  for (EdgeSpec& e : spec.edges) {
    if (e.src == anchor) e.src = id;
  }
  spec.edges.push_back({anchor, id});
  spec.nodes.push_back({id, op, hp});
  JoinColumnAfter(spec, anchor, id);
  if (spec.output == anchor) spec.output = id;
  return id;
}

// Removes a node, wiring each predecessor to each successor.
void Bypass(ArchSpec& spec, const std::string& id) {
  const auto preds = spec.Predecessors(id);
  const auto succs = spec.Successors(id);
  std::erase_if(spec.edges, [&](const EdgeSpec& e) { return e.src == id || e.dst == id; });
  for (const auto& p : preds)
    for (const auto& s : succs) spec.edges.push_back({p, s});
  std::erase_if(spec.nodes, [&](const NodeSpec& n) { return n.id == id; });
  DropFromColumns(spec, id);
  SortEdges(spec);
}

bool Reaches(const ArchSpec& spec, const std::string& from, const std::string& to) {
  std::vector<std::string> stack{from};
  std::set<std::string> seen;
  while (!stack.empty()) {
    std::string cur = std::move(stack.back());
    stack.pop_back();
    if (cur == to) return true;
    if (!seen.insert(cur).second) continue;
    for (auto& s : spec.Successors(cur)) stack.push_back(std::move(s));
  }
  return false;
}

template <typename T>
const T& Pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

// Number of AADS halvings taking `from` to `to`, or -1 if none does.
int HalvingsBetween(const FeatureShape& from, const FeatureShape& to) {
  std::int64_t h = from.h, w = from.w;
  for (int n = 0; n < 16; ++n) {
    if (h == to.h && w == to.w) return n;
    if (h < 2 || w < 2 || h < to.h || w < to.w) return -1;
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return -1;
}

// Body sites: nodes whose output still has spatial extent of at least
// `min_extent`, excluding the pooled tail.
std::vector<std::string> BodySites(const ArchPlan& plan, std::int64_t min_extent) {
  std::vector<std::string> out;
  for (const ResolvedNode& n : plan.nodes) {
    if (n.op == OpKind::kGap || n.op == OpKind::kDualhead) continue;
    if (n.out.h >= min_extent && n.out.w >= min_extent) out.push_back(n.id);
  }
  return out;
}

bool MutationApplies(ArchSpec& spec, MutationKind kind, Rng& rng) {
  const ArchPlan plan = InferShapes(spec);
  switch (kind) {
    case MutationKind::kInsertAcond:
    case MutationKind::kInsertResblock: {
      auto sites = BodySites(plan, 2);
      if (sites.empty()) return false;
      InsertAfter(spec, Pick(sites, rng),
                  kind == MutationKind::kInsertAcond ? OpKind::kAcond : OpKind::kResblock, {});
      return true;
    }
    case MutationKind::kAddAads: {
      auto sites = BodySites(plan, 4);
      if (sites.empty()) return false;
      InsertAfter(spec, Pick(sites, rng), OpKind::kAads, {});
      return true;
    }
    case MutationKind::kRemoveResblock:
    case MutationKind::kRemoveAads: {
      const OpKind op =
          kind == MutationKind::kRemoveResblock ? OpKind::kResblock : OpKind::kAads;
      std::vector<std::string> sites;
      for (const NodeSpec& n : spec.nodes) {
        if (n.op == op && n.id != spec.output) sites.push_back(n.id);
      }
      if (sites.empty()) return false;
      Bypass(spec, Pick(sites, rng));
      return true;
    }
    case MutationKind::kWiden:
    case MutationKind::kNarrow: {
      std::vector<std::string> sites;
      for (const NodeSpec& n : spec.nodes) {
        if ((n.op == OpKind::kConv || n.op == OpKind::kPwconv) && n.hp.c) sites.push_back(n.id);
      }
      if (sites.empty()) return false;
      NodeSpec& node = *spec.FindNode(Pick(sites, rng));
      const std::int64_t c = *node.hp.c;
      const std::int64_t next =
          kind == MutationKind::kWiden ? c * 2 : std::max<std::int64_t>(4, c / 2);
      if (next == c) return false;
      node.hp.c = next;
      return true;
    }
    case MutationKind::kAddCrossColumnEdge: {
      if (spec.columns.size() < 2) return false;
      std::vector<EdgeSpec> sites;
      for (std::size_t i = 0; i < spec.columns.size(); ++i) {
        for (std::size_t j = 0; j < spec.columns.size(); ++j) {
          if (i == j) continue;
          for (const std::string& src : spec.columns[i]) {
            for (const std::string& dst : spec.columns[j]) {
              const ResolvedNode* s = plan.Find(src);
              const ResolvedNode* d = plan.Find(dst);
              if (d->op == OpKind::kDualhead || s->op == OpKind::kDualhead) continue;
              if (HalvingsBetween(s->out, d->in) < 0) continue;
              const auto preds = spec.Predecessors(dst);
              if (std::find(preds.begin(), preds.end(), src) != preds.end()) continue;
              if (Reaches(spec, dst, src)) continue;
              sites.push_back({src, dst});
            }
          }
        }
      }
      if (sites.empty()) return false;
      spec.edges.push_back(Pick(sites, rng));
      SortEdges(spec);
      return true;
    }
    case MutationKind::kRemoveCrossColumnEdge: {
      std::vector<EdgeSpec> sites;
      for (const EdgeSpec& e : spec.edges) {
        const int a = ColumnOf(spec, e.src), b = ColumnOf(spec, e.dst);
        if (a < 0 || b < 0 || a == b) continue;
        if (spec.Predecessors(e.dst).size() < 2) continue;
        if (spec.Successors(e.src).size() < 2) continue;
        sites.push_back(e);
      }
      if (sites.empty()) return false;
      const EdgeSpec gone = Pick(sites, rng);
      std::erase(spec.edges, gone);
      return true;
    }
    case MutationKind::kDuplicateColumn: {
      std::vector<std::size_t> sites;
      for (std::size_t i = 0; i < spec.columns.size(); ++i) {
        bool ok = true;
        for (const std::string& id : spec.columns[i]) {
          const NodeSpec* n = spec.FindNode(id);
          ok = ok && id != spec.output && n->op != OpKind::kDualhead;
        }
        if (ok) sites.push_back(i);
      }
      if (sites.empty()) return false;
      const std::vector<std::string> members = spec.columns[Pick(sites, rng)];
      const std::set<std::string> in_col(members.begin(), members.end());
      std::map<std::string, std::string> copy;
      std::vector<std::string> new_col;
      for (const std::string& id : members) {
        const NodeSpec original = *spec.FindNode(id);
        copy[id] = NewId(spec, OpKindName(original.op));
        spec.nodes.push_back({copy[id], original.op, original.hp});
        new_col.push_back(copy[id]);
      }
      const std::vector<EdgeSpec> edges = spec.edges;
      for (const EdgeSpec& e : edges) {
        const bool s = in_col.count(e.src) > 0, d = in_col.count(e.dst) > 0;
        if (s && d) spec.edges.push_back({copy[e.src], copy[e.dst]});
        if (!s && d) spec.edges.push_back({e.src, copy[e.dst]});
        if (s && !d) spec.edges.push_back({copy[e.src], e.dst});
      }
      spec.columns.push_back(std::move(new_col));
      SortEdges(spec);
      return true;
    }
  }
  return false;
}

}  // namespace

double NetScore(double acc_pct, double params_m, double flops_m, const NetScoreWeights& w) {
  if (!(acc_pct > 0.0) || !(params_m > 0.0) || !(flops_m > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "netscore: accuracy, params and FLOPs must all be positive");
  }
  if (!(w.alpha > 0.0) || !(w.beta > 0.0) || !(w.gamma > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "netscore: alpha, beta and gamma must be positive");
  }
  return 20.0 * (w.alpha * std::log10(acc_pct) - w.beta * std::log10(params_m) -
                 w.gamma * std::log10(flops_m));
}

void SearchConfig::Validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (seeds.empty()) fail("search needs at least one seed");
  if (budget_flops < 1) fail("budget_flops must be >= 1");
  if (iterations < 1) fail("iterations must be >= 1");
  if (population < 1) fail("population must be >= 1");
  if (elite < 1 || elite > population) fail("elite must be in [1, population]");
  if (proxy_epochs < 0) fail("proxy_epochs must be >= 0");
  if (!(weights.alpha > 0.0 && weights.beta > 0.0 && weights.gamma > 0.0)) {
    fail("netscore weights must be positive");
  }
  proxy_train.Validate();
}

ArchSpec SeedPrototype(const FeatureShape& input) {
  ArchSpec spec;
  spec.input = input;
  auto node = [&](const std::string& id, OpKind op, HyperParams hp = {}) {
    spec.nodes.push_back({id, op, hp});
  };
  HyperParams stem;
  stem.k = 3;
  stem.c = 8;
  if (input.h >= 16 && input.w >= 16) stem.s = 2;
  node("stem", OpKind::kConv, stem);
  node("stem_bn", OpKind::kBn);
  node("stem_relu", OpKind::kRelu);
  node("res1", OpKind::kResblock);
  std::vector<std::string> chain = {"stem", "stem_bn", "stem_relu", "res1"};
  std::vector<std::vector<std::string>> columns = {chain};
  const std::int64_t stride = stem.s.value_or(1);
  std::int64_t h = (input.h - 1) / stride + 1, w = (input.w - 1) / stride + 1;
  for (int stage = 2; stage <= 3; ++stage) {
    std::vector<std::string> col;
    if (h >= 4 && w >= 4) {
      const std::string down = "down" + std::to_string(stage - 1);
      node(down, OpKind::kAads);
      columns.back().push_back(down);
      chain.push_back(down);
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    const std::string res = "res" + std::to_string(stage);
    node(res, OpKind::kResblock);
    chain.push_back(res);
    columns.push_back({res});
  }
  node("pool", OpKind::kGap);
  HyperParams head;
  head.c = 2;
  node("head", OpKind::kDualhead, head);
  chain.push_back("pool");
  chain.push_back("head");
  spec.edges.push_back({std::string(kInputId), chain.front()});
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) spec.edges.push_back({chain[i], chain[i + 1]});
  spec.columns = columns;
  spec.output = "head";
  return spec;
}

std::string_view MutationKindName(MutationKind kind) {
  switch (kind) {
    case MutationKind::kInsertAcond:
      return "insert_acond";
    case MutationKind::kInsertResblock:
      return "insert_resblock";
    case MutationKind::kRemoveResblock:
      return "remove_resblock";
    case MutationKind::kWiden:
      return "widen";
    case MutationKind::kNarrow:
      return "narrow";
    case MutationKind::kAddAads:
      return "add_aads";
    case MutationKind::kRemoveAads:
      return "remove_aads";
    case MutationKind::kAddCrossColumnEdge:
      return "add_cross_column_edge";
    case MutationKind::kRemoveCrossColumnEdge:
      return "remove_cross_column_edge";
    case MutationKind::kDuplicateColumn:
      return "duplicate_column";
  }
  return "unknown";
}

bool RepairJoins(ArchSpec& spec) {
  for (int round = 0; round < 64; ++round) {
    try {
      CheckStructure(spec);
    } catch (const Error&) {
      return false;
    }
    std::map<std::string, FeatureShape> shapes{{std::string(kInputId), spec.input}};
    bool changed = false;
    for (const std::string& id : TopologicalOrder(spec)) {
      auto preds = spec.Predecessors(id);
      std::sort(preds.begin(), preds.end());
      // Join target: the predecessor with the smallest spatial extent.
      std::string target = preds.front();
      for (const std::string& p : preds) {
        const FeatureShape& s = shapes.at(p);
        const FeatureShape& t = shapes.at(target);
        if (s.h * s.w < t.h * t.w) target = p;
      }
      const FeatureShape want = shapes.at(target);
      for (const std::string& p : preds) {
        FeatureShape have = shapes.at(p);
        if (have == want) continue;
        const int halvings = HalvingsBetween(have, want);
        if (halvings < 0) return false;
        std::erase(spec.edges, EdgeSpec{p, id});
        std::string prev = p;
        auto add = [&](OpKind op, HyperParams hp) {
          const std::string nid = NewId(spec, OpKindName(op));
          spec.nodes.push_back({nid, op, hp});
          spec.edges.push_back({prev, nid});
          JoinColumnAfter(spec, ColumnOf(spec, id) >= 0 ? id : prev, nid);
          prev = nid;
        };
        for (int i = 0; i < halvings; ++i) add(OpKind::kAads, {});
        if (have.c != want.c) {
          HyperParams hp;
          hp.c = want.c;
          add(OpKind::kPwconv, hp);
        }
        spec.edges.push_back({prev, id});
        SortEdges(spec);
        changed = true;
        break;
      }
      if (changed) break;
      try {
        shapes[id] = ResolveNodeShape(*spec.FindNode(id), want).out;
      } catch (const Error&) {
        return false;
      }
    }
    if (!changed) return true;
  }
  return false;
}

std::optional<ArchSpec> ApplyMutation(const ArchSpec& spec, MutationKind kind, Rng& rng) {
  ArchSpec out = spec;
  try {
    if (!MutationApplies(out, kind, rng)) return std::nullopt;
    if (!RepairJoins(out)) return std::nullopt;
    InferShapes(out);
    // The printed form must parse back to the same graph.
    if (!StructurallyEqual(ParseArch(PrintArch(out)), out)) return std::nullopt;
  } catch (const Error&) {
    return std::nullopt;
  }
  if (StructurallyEqual(out, spec)) return std::nullopt;
  return out;
}

ArchSpec Mutate(const ArchSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> kinds(0, kMutationKinds - 1);
  for (int attempt = 0; attempt < kMutationRetries; ++attempt) {
    const auto kind = static_cast<MutationKind>(kinds(rng));
    if (auto m = ApplyMutation(spec, kind, rng)) return std::move(*m);
  }
  return spec;
}

ProxyResult ProxyEvaluate(const ArchSpec& spec, const DatasetSplit& data, int epochs,
                          std::uint64_t seed, const TrainConfig& train) {
  TrainConfig cfg = train;
  cfg.epochs = epochs;
  cfg.seed = seed;
  FloatGraph graph = FloatGraph::Compile(spec, seed);
  try {
    Train(graph, data.train, cfg);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    return {0.0, true};
  }
  const double acc = Evaluate(graph, data.test).accuracy;
  if (!std::isfinite(acc)) return {0.0, true};
  return {acc, false};
}

SearchResult Explore(const SearchConfig& cfg, const DatasetSplit& data,
                     const std::function<void(int, const SearchResult&)>& on_iteration) {
  cfg.Validate();
  if (data.train.empty() || data.test.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "search needs non-empty train and test splits");
  }
  const FeatureShape input{1, data.train.front().height, data.train.front().width};
  const std::uint64_t master = cfg.seeds.front();

  SearchResult result;
  std::map<std::string, Candidate> evaluated;  // by spec text
  std::optional<double> best;

  auto score = [&](const ArchSpec& spec, int iteration) {
    Candidate c;
    c.spec = spec;
    c.text = PrintArch(spec);
    c.iteration = iteration;
    c.cost = ComputeCost(spec);
    c.feasibility = ValidateConstraints(spec, cfg.budget_flops);
    if (!c.feasibility.feasible) return c;
    if (auto it = evaluated.find(c.text); it != evaluated.end()) {
      Candidate cached = it->second;
      cached.iteration = iteration;
      return cached;
    }
    double acc = 0.0;
    for (std::uint64_t s : cfg.seeds) {
      const ProxyResult r = ProxyEvaluate(spec, data, cfg.proxy_epochs, s, cfg.proxy_train);
      c.diverged = c.diverged || r.diverged;
      acc += r.accuracy;
    }
    acc = c.diverged ? 0.0 : acc / static_cast<double>(cfg.seeds.size());
    c.proxy_acc = acc;
    if (!c.diverged && acc > 0.0) {
      c.u_value = NetScore(acc, static_cast<double>(c.cost.params) / 1e6,
                           static_cast<double>(c.cost.flops) / 1e6, cfg.weights);
    }
    evaluated.emplace(c.text, c);
    return c;
  };

  // U descending; evaluated-without-U (diverged) after every scored one;
  // earlier discovery wins ties.
  std::vector<std::string> order;  // discovery order of evaluated texts
  auto ranked = [&] {
    std::vector<const Candidate*> v;
    for (const std::string& t : order) v.push_back(&evaluated.at(t));
    std::stable_sort(v.begin(), v.end(), [](const Candidate* a, const Candidate* b) {
      if (a->u_value.has_value() != b->u_value.has_value()) return a->u_value.has_value();
      return a->u_value.value_or(0.0) > b->u_value.value_or(0.0);
    });
    return v;
  };

  const ArchSpec prototype = SeedPrototype(input);
  std::vector<ArchSpec> elites;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<ArchSpec> population;
    std::vector<ArchSpec> parents = elites.empty() ? std::vector<ArchSpec>{prototype} : elites;
    if (iter == 0) {
      population.push_back(prototype);
    } else {
      population = elites;
    }
    const Rng::result_type iter_seed = DeriveSeed(master, static_cast<std::uint64_t>(iter));
    for (int slot = 0; static_cast<int>(population.size()) < cfg.population; ++slot) {
      const ArchSpec& parent = parents[static_cast<std::size_t>(slot) % parents.size()];
      population.push_back(Mutate(parent, DeriveSeed(iter_seed, static_cast<std::uint64_t>(slot))));
    }
    const bool carry = iter > 0;
    for (std::size_t i = 0; i < population.size(); ++i) {
      // Elites carried into this generation are already scored.
      if (carry && i < elites.size()) continue;
      Candidate c = score(population[i], iter);
      if (c.proxy_acc && std::find(order.begin(), order.end(), c.text) == order.end()) {
        order.push_back(c.text);
      }
      result.log.push_back(std::move(c));
    }
    elites.clear();
    for (const Candidate* c : ranked()) {
      if (!c->u_value) break;
      if (static_cast<int>(elites.size()) == cfg.elite) break;
      elites.push_back(c->spec);
    }
    const auto r = ranked();
    if (!r.empty() && r.front()->u_value) best = r.front()->u_value;
    result.best_u.push_back(best);
    if (on_iteration) on_iteration(iter, result);
  }
  for (const Candidate* c : ranked()) result.ranked.push_back(*c);
  return result;
}

std::string CandidateRecord(const Candidate& c, const std::optional<double>& best_u) {
  Json violations = Json::array();
  for (const Violation& v : c.feasibility.violations) {
    violations.push_back(Json{{"code", v.code}, {"node", v.node}, {"message", v.message}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json rec{{"iteration", c.iteration},
           {"spec", c.text},
           {"params", c.cost.params},
           {"flops", c.cost.flops},
           {"feasible", c.feasibility.feasible},
           {"violations", violations},
           {"proxy_acc", opt(c.proxy_acc)},
           {"u_value", opt(c.u_value)},
           {"diverged", c.diverged},
           {"best_u", opt(best_u)}};
  return rec.dump();
}

}  // namespace cforge
