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

#include "cforge/arch.h"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cforge/error.h"

namespace cforge {

namespace {

struct OpInfo {
  OpKind op;
  std::string_view name;
  std::string_view keys;  // hyperparameters the op accepts
};

constexpr OpInfo kOps[] = {
    {OpKind::kConv, "conv", "kscgp"},   {OpKind::kDwconv, "dwconv", "ksp"},
    {OpKind::kPwconv, "pwconv", "csg"}, {OpKind::kAads, "aads", "f"},
    {OpKind::kAcond, "acond", "e"},     {OpKind::kResblock, "resblock", ""},
    {OpKind::kRelu, "relu", ""},        {OpKind::kBn, "bn", ""},
    {OpKind::kMaxpool, "maxpool", "ks"}, {OpKind::kGap, "gap", ""},
    {OpKind::kDualhead, "dualhead", "c"},
};

const OpInfo& Info(OpKind op) {
  for (const OpInfo& info : kOps) {
    if (info.op == op) return info;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown op kind");
}

constexpr std::string_view kHyperKeys = "kscgpfe";

std::optional<std::int64_t>& HyperField(HyperParams& hp, char key) {
  switch (key) {
    case 'k': return hp.k;
    case 's': return hp.s;
    case 'c': return hp.c;
    case 'g': return hp.g;
    case 'p': return hp.p;
    case 'f': return hp.f;
    default: return hp.e;
  }
}

const std::optional<std::int64_t>& HyperField(const HyperParams& hp, char key) {
  return HyperField(const_cast<HyperParams&>(hp), key);
}

// Source positions gathered while parsing, used to locate structural errors.
struct Locations {
  std::map<std::string, std::pair<int, int>> nodes;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::pair<int, int>> columns;
  std::pair<int, int> output{0, 0};
};

[[noreturn]] void Fail(const Locations* loc, std::pair<int, int> where,
                       const std::string& message) {
  if (loc != nullptr && where.first > 0) {
    throw ParseError(where.first, where.second, message);
  }
  throw Error(ErrorCode::kInvalidArgument, message);
}

std::pair<int, int> NodeLoc(const Locations* loc, const std::string& id) {
  if (loc == nullptr) return {0, 0};
  auto it = loc->nodes.find(id);
  return it == loc->nodes.end() ? std::pair<int, int>{0, 0} : it->second;
}

std::pair<int, int> EdgeLoc(const Locations* loc, std::size_t i) {
  return loc == nullptr || i >= loc->edges.size() ? std::pair<int, int>{0, 0}
                                                  : loc->edges[i];
}

void CheckStructureImpl(const ArchSpec& spec, const Locations* loc) {
  if (spec.input.c < 1 || spec.input.h < 1 || spec.input.w < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "input shape must be positive, got " + spec.input.ToString());
  }
  std::set<std::string> ids;
  for (const NodeSpec& n : spec.nodes) {
    if (!IsValidId(n.id) || n.id == kInputId) {
      Fail(loc, NodeLoc(loc, n.id), "invalid node id '" + n.id + "'");
    }
    if (!ids.insert(n.id).second) {
      Fail(loc, NodeLoc(loc, n.id), "duplicate node id '" + n.id + "'");
    }
  }
  std::set<EdgeSpec> seen_edges;
  for (std::size_t i = 0; i < spec.edges.size(); ++i) {
    const EdgeSpec& e = spec.edges[i];
    for (const std::string* end : {&e.src, &e.dst}) {
      if (*end != kInputId && ids.count(*end) == 0) {
        Fail(loc, EdgeLoc(loc, i), "edge endpoint '" + *end + "' is not defined");
      }
    }
    if (e.dst == kInputId) Fail(loc, EdgeLoc(loc, i), "edge into the input node");
    if (!seen_edges.insert(e).second) {
      Fail(loc, EdgeLoc(loc, i), "duplicate edge " + e.src + " -> " + e.dst);
    }
  }
  std::set<std::string> in_column;
  for (std::size_t i = 0; i < spec.columns.size(); ++i) {
    const auto where = loc == nullptr || i >= loc->columns.size()
                           ? std::pair<int, int>{0, 0}
                           : loc->columns[i];
    if (spec.columns[i].empty()) Fail(loc, where, "empty column");
    for (const std::string& id : spec.columns[i]) {
      if (ids.count(id) == 0) Fail(loc, where, "column member '" + id + "' is not defined");
      if (!in_column.insert(id).second) {
        Fail(loc, where, "node '" + id + "' appears in more than one column");
      }
    }
  }
  const auto out_where = loc == nullptr ? std::pair<int, int>{0, 0} : loc->output;
  if (spec.output.empty()) Fail(loc, out_where, "missing output declaration");
  if (spec.output != kInputId && ids.count(spec.output) == 0) {
    Fail(loc, out_where, "output '" + spec.output + "' is not defined");
  }

  // Cycle detection by DFS; report the edge that closes the first cycle.
  std::map<std::string, std::vector<std::size_t>> out_edges;
  for (std::size_t i = 0; i < spec.edges.size(); ++i) {
    out_edges[spec.edges[i].src].push_back(i);
  }
  std::map<std::string, int> color;  // 0 new, 1 on stack, 2 done
  std::function<void(const std::string&)> dfs = [&](const std::string& u) {
    color[u] = 1;
    for (std::size_t ei : out_edges[u]) {
      const std::string& v = spec.edges[ei].dst;
      if (color[v] == 1) {
        Fail(loc, EdgeLoc(loc, ei),
             "cycle through edge " + spec.edges[ei].src + " -> " + v);
      }
      if (color[v] == 0) dfs(v);
    }
    color[u] = 2;
  };
  for (const std::string& id : ids) {
    if (color[id] == 0) dfs(id);
  }

  // Every node needs an input and must contribute to the output.
  std::map<std::string, std::vector<std::string>> preds;
  for (const EdgeSpec& e : spec.edges) preds[e.dst].push_back(e.src);
  for (const NodeSpec& n : spec.nodes) {
    if (preds[n.id].empty()) {
      Fail(loc, NodeLoc(loc, n.id), "node '" + n.id + "' has no incoming edge");
    }
  }
  std::set<std::string> reaches{spec.output};
  std::vector<std::string> stack{spec.output};
  while (!stack.empty()) {
    std::string u = stack.back();
    stack.pop_back();
    for (const std::string& p : preds[u]) {
      if (reaches.insert(p).second) stack.push_back(p);
    }
  }
  for (const NodeSpec& n : spec.nodes) {
    if (reaches.count(n.id) == 0) {
      Fail(loc, NodeLoc(loc, n.id),
           "node '" + n.id + "' does not reach output '" + spec.output + "'");
    }
  }
  if (reaches.count(std::string(kInputId)) == 0) {
    Fail(loc, out_where, "output '" + spec.output + "' is not connected to the input");
  }
}

// Splits a line into whitespace-separated tokens with 1-based columns.
std::vector<std::pair<std::string, int>> Tokenize(std::string_view line) {
  std::vector<std::pair<std::string, int>> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    tokens.emplace_back(std::string(line.substr(start, i - start)),
                        static_cast<int>(start) + 1);
  }
  return tokens;
}

std::optional<std::int64_t> ParseInt(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

FeatureShape ParseShape(const std::string& text, int line, int col) {
  FeatureShape shape;
  std::int64_t* dims[] = {&shape.c, &shape.h, &shape.w};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t next = i < 2 ? text.find('x', pos) : text.size();
    if (next == std::string::npos) {
      throw ParseError(line, col, "input shape must be CxHxW, got '" + text + "'");
    }
    auto v = ParseInt(std::string_view(text).substr(pos, next - pos));
    if (!v || *v < 1) {
      throw ParseError(line, col, "input shape must be CxHxW with positive extents, got '" +
                                      text + "'");
    }
    *dims[i] = *v;
    pos = next + 1;
  }
  return shape;
}

[[noreturn]] void NodeError(const ResolvedNode& n, const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, "node '" + n.id + "' (" +
                                               std::string(OpKindName(n.op)) +
                                               "): " + message);
}

std::int64_t ConvExtent(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

void ResolveNode(const NodeSpec& spec, ResolvedNode& n) {
  const HyperParams& hp = spec.hp;
  const FeatureShape in = n.in;
  auto positive = [&](const std::optional<std::int64_t>& v, std::int64_t dflt,
                      const char* name) {
    const std::int64_t value = v.value_or(dflt);
    if (value < 1) NodeError(n, std::string(name) + " must be >= 1");
    return value;
  };
  auto conv_out = [&](std::int64_t cout) {
    if (n.pad < 0) NodeError(n, "p must be >= 0");
    if (in.c % n.groups != 0 || cout % n.groups != 0) {
      NodeError(n, "groups " + std::to_string(n.groups) + " must divide input channels " +
                       std::to_string(in.c) + " and output channels " +
                       std::to_string(cout));
    }
    const std::int64_t ho = ConvExtent(in.h, n.kernel, n.stride, n.pad);
    const std::int64_t wo = ConvExtent(in.w, n.kernel, n.stride, n.pad);
    if (in.h + 2 * n.pad < n.kernel || in.w + 2 * n.pad < n.kernel) {
      NodeError(n, "kernel " + std::to_string(n.kernel) + " exceeds padded input " +
                       in.ToString());
    }
    n.out = {cout, ho, wo};
  };
  switch (n.op) {
    case OpKind::kConv: {
      n.kernel = positive(hp.k, 3, "k");
      n.stride = positive(hp.s, 1, "s");
      n.pad = hp.p.value_or(n.kernel / 2);
      n.groups = positive(hp.g, 1, "g");
      if (!hp.c) NodeError(n, "missing output channels c");
      conv_out(positive(hp.c, 1, "c"));
      break;
    }
    case OpKind::kDwconv:
      n.kernel = positive(hp.k, 3, "k");
      n.stride = positive(hp.s, 1, "s");
      n.pad = hp.p.value_or(n.kernel / 2);
      n.groups = in.c;
      conv_out(in.c);
      break;
    case OpKind::kPwconv:
      n.kernel = 1;
      n.stride = positive(hp.s, 1, "s");
      n.pad = 0;
      n.groups = positive(hp.g, 1, "g");
      if (!hp.c) NodeError(n, "missing output channels c");
      conv_out(positive(hp.c, 1, "c"));
      break;
    case OpKind::kAads:
      n.filter = hp.f.value_or(3);
      n.stride = 2;
      if (n.filter != 3 && n.filter != 5) NodeError(n, "f must be 3 or 5");
      if (in.h < 2 || in.w < 2) NodeError(n, "input " + in.ToString() + " is too small");
      n.out = {in.c, (in.h + 1) / 2, (in.w + 1) / 2};
      break;
    case OpKind::kAcond:
      n.embed = positive(hp.e, DefaultEmbedChannels(in.c), "e");
      if (in.h < 2 || in.w < 2) NodeError(n, "input " + in.ToString() + " is too small");
      n.out = in;
      break;
    case OpKind::kResblock:
    case OpKind::kRelu:
    case OpKind::kBn:
      n.out = in;
      break;
    case OpKind::kMaxpool:
      n.kernel = positive(hp.k, 2, "k");
      n.stride = positive(hp.s, n.kernel, "s");
      if (n.kernel > in.h || n.kernel > in.w) {
        NodeError(n, "window " + std::to_string(n.kernel) + " exceeds input " + in.ToString());
      }
      n.out = {in.c, ConvExtent(in.h, n.kernel, n.stride, 0),
               ConvExtent(in.w, n.kernel, n.stride, 0)};
      break;
    case OpKind::kGap:
      n.out = {in.c, 1, 1};
      break;
    case OpKind::kDualhead:
      n.classes = hp.c.value_or(2);
      if (n.classes < 2) NodeError(n, "needs at least 2 classes");
      n.out = {n.classes, 1, 1};
      break;
  }
}

}  // namespace

std::string_view OpKindName(OpKind op) { return Info(op).name; }

std::optional<OpKind> OpKindFromName(std::string_view name) {
  for (const OpInfo& info : kOps) {
    if (info.name == name) return info.op;
  }
  return std::nullopt;
}

std::string FeatureShape::ToString() const {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

const NodeSpec* ArchSpec::FindNode(std::string_view id) const {
  for (const NodeSpec& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

NodeSpec* ArchSpec::FindNode(std::string_view id) {
  for (NodeSpec& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

bool ArchSpec::HasId(std::string_view id) const {
  return id == kInputId || FindNode(id) != nullptr;
}

std::vector<std::string> ArchSpec::Predecessors(std::string_view id) const {
  std::vector<std::string> out;
  for (const EdgeSpec& e : edges) {
    if (e.dst == id) out.push_back(e.src);
  }
  return out;
}

std::vector<std::string> ArchSpec::Successors(std::string_view id) const {
  std::vector<std::string> out;
  for (const EdgeSpec& e : edges) {
    if (e.src == id) out.push_back(e.dst);
  }
  return out;
}

bool StructurallyEqual(const ArchSpec& a, const ArchSpec& b) {
  if (!(a.input == b.input) || a.output != b.output || a.columns != b.columns ||
      a.nodes.size() != b.nodes.size()) {
    return false;
  }
  for (const NodeSpec& n : a.nodes) {
    const NodeSpec* m = b.FindNode(n.id);
    if (m == nullptr || !(*m == n)) return false;
  }
  std::multiset<EdgeSpec> ea(a.edges.begin(), a.edges.end());
  std::multiset<EdgeSpec> eb(b.edges.begin(), b.edges.end());
  return ea == eb;
}

bool IsValidId(std::string_view id) {
  if (id.empty()) return false;
  auto alpha = [](char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || ch == '_';
  };
  if (!alpha(id[0])) return false;
  return std::all_of(id.begin() + 1, id.end(),
                     [&](char ch) { return alpha(ch) || (ch >= '0' && ch <= '9'); });
}

ArchSpec ParseArch(std::string_view text) {
  ArchSpec spec;
  Locations loc;
  bool have_input = false;
  bool have_output = false;
  int line_no = 0;
  int last_line = 1;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const auto tokens = Tokenize(line);
    if (tokens.empty()) {
      if (eol == text.size()) break;
      continue;
    }
    last_line = line_no;
    const std::string& keyword = tokens[0].first;
    auto expect_count = [&](std::size_t lo, std::size_t hi, const char* usage) {
      if (tokens.size() < lo || tokens.size() > hi) {
        throw ParseError(line_no, tokens[0].second, std::string("expected '") + usage + "'");
      }
    };
    auto check_id = [&](const std::pair<std::string, int>& tok) {
      if (!IsValidId(tok.first)) {
        throw ParseError(line_no, tok.second, "invalid identifier '" + tok.first + "'");
      }
    };
    if (keyword == "input") {
      expect_count(2, 2, "input CxHxW");
      if (have_input) throw ParseError(line_no, tokens[0].second, "duplicate input declaration");
      spec.input = ParseShape(tokens[1].first, line_no, tokens[1].second);
      have_input = true;
    } else if (keyword == "node") {
      if (tokens.size() < 3) {
        throw ParseError(line_no, tokens[0].second, "expected 'node <id> <op> [k=v,...]'");
      }
      check_id(tokens[1]);
      NodeSpec node;
      node.id = tokens[1].first;
      if (node.id == kInputId) {
        throw ParseError(line_no, tokens[1].second, "id 'input' is reserved");
      }
      if (loc.nodes.count(node.id) != 0) {
        throw ParseError(line_no, tokens[1].second,
                         "duplicate node id '" + node.id + "' (first defined on line " +
                             std::to_string(loc.nodes[node.id].first) + ")");
      }
      auto op = OpKindFromName(tokens[2].first);
      if (!op) throw ParseError(line_no, tokens[2].second, "unknown op '" + tokens[2].first + "'");
      node.op = *op;
      const std::string_view allowed = Info(node.op).keys;
      for (std::size_t t = 3; t < tokens.size(); ++t) {
        const std::string& tok = tokens[t].first;
        std::size_t start = 0;
        while (start <= tok.size()) {
          const std::size_t comma = std::min(tok.find(',', start), tok.size());
          const std::string item = tok.substr(start, comma - start);
          const int col = tokens[t].second + static_cast<int>(start);
          start = comma + 1;
          if (item.empty()) {
            if (comma == tok.size()) break;
            throw ParseError(line_no, col, "empty hyperparameter");
          }
          const std::size_t eq = item.find('=');
          if (eq != 1 || kHyperKeys.find(item[0]) == std::string_view::npos) {
            throw ParseError(line_no, col, "malformed hyperparameter '" + item + "'");
          }
          if (allowed.find(item[0]) == std::string_view::npos) {
            throw ParseError(line_no, col, "op '" + tokens[2].first +
                                               "' does not accept '" + item.substr(0, 1) + "'");
          }
          auto value = ParseInt(std::string_view(item).substr(2));
          if (!value) throw ParseError(line_no, col + 2, "expected an integer in '" + item + "'");
          auto& field = HyperField(node.hp, item[0]);
          if (field) throw ParseError(line_no, col, "hyperparameter repeated: '" + item + "'");
          field = *value;
        }
      }
      loc.nodes[node.id] = {line_no, tokens[1].second};
      spec.nodes.push_back(std::move(node));
    } else if (keyword == "edge") {
      expect_count(3, 3, "edge <src> <dst>");
      check_id(tokens[1]);
      check_id(tokens[2]);
      spec.edges.push_back({tokens[1].first, tokens[2].first});
      loc.edges.emplace_back(line_no, tokens[0].second);
    } else if (keyword == "column") {
      expect_count(2, static_cast<std::size_t>(-1), "column <id...>");
      std::vector<std::string> members;
      for (std::size_t t = 1; t < tokens.size(); ++t) {
        check_id(tokens[t]);
        members.push_back(tokens[t].first);
      }
      spec.columns.push_back(std::move(members));
      loc.columns.emplace_back(line_no, tokens[0].second);
    } else if (keyword == "output") {
      expect_count(2, 2, "output <id>");
      if (have_output) throw ParseError(line_no, tokens[0].second, "duplicate output declaration");
      check_id(tokens[1]);
      spec.output = tokens[1].first;
      loc.output = {line_no, tokens[1].second};
      have_output = true;
    } else {
      throw ParseError(line_no, tokens[0].second, "unknown statement '" + keyword + "'");
    }
    if (eol == text.size()) break;
  }
  if (!have_input) throw ParseError(last_line, 1, "missing input declaration");
  if (!have_output) throw ParseError(last_line, 1, "missing output declaration");
  CheckStructureImpl(spec, &loc);
  return spec;
}

std::string PrintArch(const ArchSpec& spec) {
  std::ostringstream out;
  out << "input " << spec.input.ToString() << "\n";
  for (const NodeSpec& n : spec.nodes) {
    out << "node " << n.id << " " << OpKindName(n.op);
    bool first = true;
    for (char key : kHyperKeys) {
      const auto& v = HyperField(n.hp, key);
      if (!v) continue;
      out << (first ? " " : ",") << key << "=" << *v;
      first = false;
    }
    out << "\n";
  }
  for (const EdgeSpec& e : spec.edges) out << "edge " << e.src << " " << e.dst << "\n";
  for (const auto& col : spec.columns) {
    out << "column";
    for (const std::string& id : col) out << " " << id;
    out << "\n";
  }
  out << "output " << spec.output << "\n";
  return out.str();
}

void CheckStructure(const ArchSpec& spec) { CheckStructureImpl(spec, nullptr); }

std::vector<std::string> TopologicalOrder(const ArchSpec& spec) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> succ;
  for (const NodeSpec& n : spec.nodes) indegree[n.id] = 0;
  for (const EdgeSpec& e : spec.edges) {
    succ[e.src].push_back(e.dst);
    if (e.src != kInputId) ++indegree[e.dst];
  }
  std::set<std::string> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.insert(id);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    std::string u = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(u);
    for (const std::string& v : succ[u]) {
      if (--indegree[v] == 0) ready.insert(v);
    }
  }
  if (order.size() != spec.nodes.size()) {
    throw Error(ErrorCode::kInvalidArgument, "architecture graph has a cycle");
  }
  return order;
}

const ResolvedNode* ArchPlan::Find(std::string_view id) const {
  for (const ResolvedNode& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

ResolvedNode ResolveNodeShape(const NodeSpec& node, const FeatureShape& in) {
  ResolvedNode n;
  n.id = node.id;
  n.op = node.op;
  n.in = in;
  ResolveNode(node, n);
  return n;
}

std::int64_t DefaultEmbedChannels(std::int64_t channels) {
  return std::max<std::int64_t>(1, channels / 4);
}

ArchPlan InferShapes(const ArchSpec& spec) {
  CheckStructure(spec);
  ArchPlan plan;
  plan.input = spec.input;
  plan.output = spec.output;
  std::map<std::string, FeatureShape> shapes{{std::string(kInputId), spec.input}};
  for (const std::string& id : TopologicalOrder(spec)) {
    const NodeSpec& ns = *spec.FindNode(id);
    ResolvedNode n;
    n.id = id;
    n.op = ns.op;
    n.preds = spec.Predecessors(id);
    std::sort(n.preds.begin(), n.preds.end());
    n.in = shapes.at(n.preds.front());
    for (const std::string& p : n.preds) {
      n.input_layer = n.input_layer || p == kInputId;
      const FeatureShape& s = shapes.at(p);
      if (!(s == n.in)) {
        throw Error(ErrorCode::kShapeMismatch,
                    "shape mismatch at join into '" + id + "': '" + n.preds.front() +
                        "' -> '" + id + "' carries " + n.in.ToString() + " but '" + p +
                        "' -> '" + id + "' carries " + s.ToString());
      }
    }
    for (const std::string& p : n.preds) {
      const NodeSpec* pn = spec.FindNode(p);
      if (pn != nullptr && pn->op == OpKind::kDualhead) {
        throw Error(ErrorCode::kShapeMismatch,
                    "dualhead '" + p + "' feeds '" + id + "'; a dualhead must be the output");
      }
    }
    ResolveNode(ns, n);
    shapes[id] = n.out;
    plan.nodes.push_back(std::move(n));
  }
  plan.output_shape = shapes.at(spec.output);
  return plan;
}

}  // namespace cforge
