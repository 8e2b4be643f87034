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

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cforge/arch.h"
#include "cforge/blocks.h"
#include "cforge/cost.h"
#include "cforge/error.h"
#include "cforge/graph.h"
#include "cforge/random.h"
#include "cforge/weights.h"
#include "support/gradcheck.h"
#include "support/naive_counter.h"
#include "support/random_arch.h"

namespace cforge {
namespace {

using testing::NaiveCountingExecutor;
using testing::RandomArch;
using testing::RandomArchOptions;
using testing::RandomTensor;

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string ReferenceArchText() {
  return ReadFile(std::string(CFORGE_SOURCE_DIR) + "/archs/reference.arch");
}

constexpr char kMinimal[] = R"(# minimal
input 1x8x8
node c conv k=3,c=4
node g gap
node h dualhead
edge input c
edge c g
edge g h
output h
)";

template <typename Fn>
std::string ParseFailure(Fn&& fn, int* line = nullptr) {
  try {
    fn();
  } catch (const ParseError& e) {
    if (line) *line = e.line();
    return e.what();
  }
  return "<no error>";
}

TEST(ParseArchTest, MinimalSource) {
  ArchSpec spec = ParseArch(kMinimal);
  EXPECT_EQ(spec.nodes.size(), 3u);  // plus the implicit input node
  EXPECT_EQ(spec.input, (FeatureShape{1, 8, 8}));
  EXPECT_EQ(spec.output, "h");
  EXPECT_EQ(spec.FindNode("c")->hp.c, 4);
  EXPECT_TRUE(spec.HasId("input"));
}

TEST(ParseArchTest, DuplicateIdNamesIdAndLine) {
  const std::string src =
      "input 1x8x8\nnode a relu\nnode a bn\nedge input a\noutput a\n";
  int line = 0;
  const std::string msg = ParseFailure([&] { ParseArch(src); }, &line);
  EXPECT_EQ(line, 3);
  EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(ParseArchTest, UnknownOpHasColumn) {
  try {
    ParseArch("input 1x8x8\nnode a  frobnicate\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_EQ(e.column(), 9);
    EXPECT_NE(std::string(e.what()).find("frobnicate"), std::string::npos);
  }
}

TEST(ParseArchTest, CycleReportsClosingEdge) {
  const std::string src =
      "input 1x8x8\nnode a relu\nnode b relu\nedge input a\nedge a b\nedge b a\noutput b\n";
  int line = 0;
  const std::string msg = ParseFailure([&] { ParseArch(src); }, &line);
  EXPECT_EQ(line, 6);
  EXPECT_NE(msg.find("cycle"), std::string::npos) << msg;
}

TEST(ParseArchTest, SyntaxErrors) {
  struct Case {
    const char* src;
    int line;
  } cases[] = {
      {"input 1x8\n", 1},
      {"input 1x8x8\nnode a conv k=3,c\n", 2},
      {"input 1x8x8\nnode a conv k=x\n", 2},
      {"input 1x8x8\nnode a relu k=3\n", 2},
      {"input 1x8x8\nnode 9a relu\n", 2},
      {"input 1x8x8\nnode a conv c=2,c=3\n", 2},
      {"input 1x8x8\nedge input\n", 2},
      {"input 1x8x8\nbogus\n", 2},
      {"input 1x8x8\nnode a relu\nedge input zz\noutput a\n", 3},
      {"input 1x8x8\nnode a relu\nedge input a\n", 3},
      {"node a relu\n", 1},
  };
  for (const Case& c : cases) {
    int line = 0;
    const std::string msg = ParseFailure([&] { ParseArch(c.src); }, &line);
    EXPECT_EQ(line, c.line) << c.src << " -> " << msg;
  }
}

TEST(ParseArchTest, DanglingNodeRejected) {
  const std::string src =
      "input 1x8x8\nnode a relu\nnode b relu\nedge input a\nedge input b\noutput a\n";
  int line = 0;
  const std::string msg = ParseFailure([&] { ParseArch(src); }, &line);
  EXPECT_EQ(line, 3);
  EXPECT_NE(msg.find("does not reach"), std::string::npos);
}

TEST(ParseArchTest, RoundTripFiftyRandomSpecs) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomArchOptions opt;
    opt.feasible_only = seed % 3 != 0;
    opt.with_columns = seed % 2 == 0;
    opt.explicit_defaults = seed % 5 == 0;
    opt.with_head = seed % 7 != 0;
    ArchSpec spec = RandomArch(seed, opt);
    const std::string text = PrintArch(spec);
    ArchSpec back = ParseArch(text);
    EXPECT_TRUE(StructurallyEqual(spec, back)) << text;
    EXPECT_EQ(PrintArch(back), text);
  }
}

TEST(ParseArchTest, StructuralEqualityIgnoresOrdering) {
  ArchSpec a = ParseArch(kMinimal);
  ArchSpec b = a;
  std::reverse(b.nodes.begin(), b.nodes.end());
  std::reverse(b.edges.begin(), b.edges.end());
  EXPECT_TRUE(StructurallyEqual(a, b));
  b.nodes[0].hp.c = 3;
  EXPECT_FALSE(StructurallyEqual(a, b));
}

TEST(TopologicalOrderTest, TieBreakByNodeId) {
  ArchSpec spec = ParseArch(
      "input 1x4x4\nnode z relu\nnode b relu\nnode m relu\nedge input z\nedge input b\n"
      "edge z m\nedge b m\noutput m\n");
  EXPECT_EQ(TopologicalOrder(spec), (std::vector<std::string>{"b", "z", "m"}));
}

TEST(CompileTest, ReferenceForwardsToProbabilityRow) {
  ArchSpec spec = ParseArch(ReferenceArchText());
  FloatGraph g = FloatGraph::Compile(spec, 1);
  Tape tape = Tape::Inference();
  auto out = g.Forward(tape, RandomTensor(Shape{1, 1, 64, 64}, 3, 0.0f, 1.0f), Mode::kTrain);
  ASSERT_EQ(out.output.shape(), (Shape{1, 2}));
  ASSERT_TRUE(out.has_heads);
  EXPECT_NEAR(out.output.data()[0] + out.output.data()[1], 1.0, 1e-6);
}

TEST(CompileTest, ChannelMismatchAtJoinNamesBothEndpoints) {
  ArchSpec spec = ParseArch(
      "input 1x8x8\nnode a conv c=4\nnode b conv c=8\nnode r resblock\n"
      "edge input a\nedge input b\nedge a r\nedge b r\noutput r\n");
  try {
    FloatGraph::Compile(spec, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
  }
}

TEST(CompileTest, DeterministicForSeedIndependentOfDeclarationOrder) {
  ArchSpec a = ParseArch(ReferenceArchText());
  ArchSpec b = a;
  std::reverse(b.nodes.begin(), b.nodes.end());
  FloatGraph ga = FloatGraph::Compile(a, 42);
  FloatGraph gb = FloatGraph::Compile(b, 42);
  EXPECT_EQ(SerializeWeights(ga), SerializeWeights(gb));
  FloatGraph gc = FloatGraph::Compile(a, 43);
  EXPECT_NE(SerializeWeights(ga), SerializeWeights(gc));
}

// Hand-wired version of:
//   stem conv(s=2) -> bn -> relu -> acond -> resblock -> aads
//   -> pwconv, joined with a skip from aads -> gap -> dualhead
TEST(CompileTest, MatchesHandWiredCompositionBitExact) {
  const std::string src = R"(input 2x12x10
node stem conv k=3,s=2,c=4
node sbn bn
node act relu
node att acond e=2
node res resblock
node down aads f=5
node proj pwconv c=4
node pool gap
node head dualhead c=3
edge input stem
edge stem sbn
edge sbn act
edge act att
edge att res
edge res down
edge down proj
edge proj pool
edge down pool
edge pool head
output head
)";
  const std::uint64_t seed = 77;
  FloatGraph g = FloatGraph::Compile(ParseArch(src), seed);
  Tensor x = RandomTensor(Shape{3, 2, 12, 10}, 8);

  auto rng_for = [&](const char* id) { return Rng(DeriveSeed(seed, HashName(id))); };
  Rng r_stem = rng_for("stem"), r_att = rng_for("att"), r_res = rng_for("res"),
      r_proj = rng_for("proj"), r_head = rng_for("head");
  auto stem = ConvLayer<float>::Init(2, 4, 3, 2, 1, 1, true, r_stem);
  auto sbn = BatchNormLayer<float>::Init(4);
  auto att = AttentionCondenserParams<float>::Init(4, 2, r_att);
  auto res = DwsepResidualParams<float>::Init(4, r_res);
  auto proj = ConvLayer<float>::Init(4, 4, 1, 1, 0, 1, true, r_proj);
  auto head = DualHeadParams<float>::Init(4, 3, r_head);

  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    Tape t1 = Tape::Inference();
    auto out = g.Forward(t1, x, mode);
    Tape t2 = Tape::Inference();
    Tensor h = stem.Forward(t2, x);
    h = Relu(t2, sbn.Forward(t2, h, mode));
    h = AttentionCondenser(t2, h, att);
    h = DwsepResidualBlock(t2, h, res, mode);
    Tensor down = AadsDownsample(t2, h, 5);
    Tensor p = proj.Forward(t2, down);
    // The graph sums predecessors in id order: "down" before "proj".
    Tensor pooled = GlobalAvgPool(t2, Add(t2, down, p));
    auto expect = DualHeadForward(t2, pooled, head);
    ASSERT_EQ(out.output.shape(), expect.agg.shape());
    EXPECT_EQ(std::memcmp(out.output.raw(), expect.agg.raw(),
                          sizeof(float) * expect.agg.numel()),
              0);
    EXPECT_EQ(std::memcmp(out.heads.p1.raw(), expect.p1.raw(),
                          sizeof(float) * expect.p1.numel()),
              0);
  }
}

TEST(CompileTest, BackwardReachesEveryParameter) {
  FloatGraph g = FloatGraph::Compile(ParseArch(ReferenceArchText()), 5);
  Tape tape;
  auto out = g.Forward(tape, RandomTensor(Shape{2, 1, 64, 64}, 1), Mode::kTrain);
  Tensor loss = Sum(tape, Mul(tape, out.output, RandomTensor(Shape{2, 2}, 4)));
  tape.Backward(loss);
  for (Tensor& p : g.Parameters()) EXPECT_TRUE(p.has_grad());
}

TEST(CostTest, SingleConvHandArithmetic) {
  ArchSpec spec =
      ParseArch("input 1x8x8\nnode c conv k=3,s=1,p=1,c=16\nedge input c\noutput c\n");
  CostReport r = ComputeCost(spec);
  EXPECT_EQ(r.params, 160);
  EXPECT_EQ(r.flops, 18432);
  EXPECT_EQ(r.flops_per_mac, 2);
  CostReport one = ComputeCost(spec, CostOptions{1, 1});
  EXPECT_EQ(one.flops, 9216);
}

TEST(CostTest, EmptyBodyIsFree) {
  CostReport r = ComputeCost(ParseArch("input 3x8x8\noutput input\n"));
  EXPECT_EQ(r.params, 0);
  EXPECT_EQ(r.flops, 0);
  EXPECT_TRUE(r.nodes.empty());
}

TEST(CostTest, TotalsAreSumOfBreakdown) {
  CostReport r = ComputeCost(ParseArch(ReferenceArchText()));
  std::int64_t params = 0, flops = 0;
  for (const NodeCost& n : r.nodes) {
    EXPECT_GE(n.params, 0);
    EXPECT_GE(n.flops, 0);
    params += n.params;
    flops += n.flops;
  }
  EXPECT_EQ(params, r.params);
  EXPECT_EQ(flops, r.flops);
  EXPECT_NE(r.Convention().find("1 MAC = 2 FLOPs"), std::string::npos);
}

TEST(CostTest, ParamsMatchCompiledGraph) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    ArchSpec spec = RandomArch(seed);
    FloatGraph g = FloatGraph::Compile(spec, seed);
    EXPECT_EQ(ComputeCost(spec).params, g.ParameterCount()) << PrintArch(spec);
  }
}

TEST(CostTest, MatchesInstrumentedNaiveExecutor) {
  NaiveCountingExecutor exec;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    ArchSpec spec = RandomArch(1000 + seed);
    ASSERT_TRUE(ValidateConstraints(spec).feasible) << PrintArch(spec);
    for (int batch : {1, 2}) {
      auto counted = exec.Run(spec, batch);
      CostReport r = ComputeCost(spec, CostOptions{batch, 2});
      EXPECT_EQ(r.macs, counted.macs) << PrintArch(spec);
      EXPECT_EQ(r.flops, 2 * counted.macs + counted.elementwise) << PrintArch(spec);
      EXPECT_EQ(r.params, counted.params) << PrintArch(spec);
    }
  }
}

TEST(CostTest, InvariantToRenaming) {
  ArchSpec spec = RandomArch(7);
  ArchSpec renamed = spec;
  auto rename = [](std::string id) { return id == "input" ? id : "n_" + id; };
  for (NodeSpec& n : renamed.nodes) n.id = rename(n.id);
  for (EdgeSpec& e : renamed.edges) e = {rename(e.src), rename(e.dst)};
  renamed.output = rename(renamed.output);
  EXPECT_EQ(ComputeCost(spec).flops, ComputeCost(renamed).flops);
  EXPECT_EQ(ComputeCost(spec).params, ComputeCost(renamed).params);
}

bool HasViolation(const FeasibilityReport& r, const std::string& code,
                  const std::string& node) {
  for (const Violation& v : r.violations) {
    if (v.code == code && v.node == node) return true;
  }
  return false;
}

TEST(ConstraintsTest, StridedPointwiseInBody) {
  auto r = ValidateConstraints(ParseArch(
      "input 1x16x16\nnode a conv c=4\nnode b pwconv c=4,s=2\nedge input a\nedge a b\n"
      "output b\n"));
  EXPECT_FALSE(r.feasible);
  EXPECT_TRUE(HasViolation(r, "C2", "b"));
}

TEST(ConstraintsTest, BodyMaxPool) {
  auto r = ValidateConstraints(ParseArch(
      "input 1x16x16\nnode a conv c=4\nnode m maxpool k=2,s=2\nedge input a\nedge a m\n"
      "output m\n"));
  EXPECT_FALSE(r.feasible);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_TRUE(HasViolation(r, "C3", "m"));
}

TEST(ConstraintsTest, ReferenceIsFeasible) {
  ArchSpec spec = ParseArch(ReferenceArchText());
  auto r = ValidateConstraints(spec);
  EXPECT_TRUE(r.feasible);
  EXPECT_LT(ComputeCost(spec).flops, kDefaultFlopBudget);
  auto mp = ValidateConstraints(
      ParseArch(ReadFile(std::string(CFORGE_SOURCE_DIR) + "/archs/reference_maxpool.arch")));
  EXPECT_FALSE(mp.feasible);
  EXPECT_TRUE(HasViolation(mp, "C3", "down1"));
}

TEST(ConstraintsTest, MonotoneInBudget) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ArchSpec spec = RandomArch(seed);
    const std::int64_t flops = ComputeCost(spec).flops;
    EXPECT_FALSE(ValidateConstraints(spec, flops).feasible);
    EXPECT_TRUE(ValidateConstraints(spec, flops + 1).feasible);
    EXPECT_TRUE(ValidateConstraints(spec, flops * 2).feasible);
  }
}

class WeightsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("cforge_weights_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string Path(const std::string& name) { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

TEST_F(WeightsTest, RoundTripIsBitExact) {
  ArchSpec spec = ParseArch(ReferenceArchText());
  FloatGraph a = FloatGraph::Compile(spec, 1);
  Tensor x = RandomTensor(Shape{2, 1, 64, 64}, 2);
  {
    Tape t = Tape::Inference();
    a.Forward(t, x, Mode::kTrain);  // populate running statistics
  }
  SaveWeights(a, Path("w.ldnw"));
  FloatGraph b = FloatGraph::Compile(spec, 99);
  LoadWeights(b, Path("w.ldnw"));
  Tape ta = Tape::Inference(), tb = Tape::Inference();
  auto ya = a.Forward(ta, x, Mode::kEval);
  auto yb = b.Forward(tb, x, Mode::kEval);
  EXPECT_EQ(std::memcmp(ya.output.raw(), yb.output.raw(), sizeof(float) * 4), 0);
  EXPECT_EQ(SerializeWeights(a), SerializeWeights(b));
}

TEST_F(WeightsTest, TwoSavesAreByteIdentical) {
  FloatGraph g = FloatGraph::Compile(ParseArch(kMinimal), 3);
  SaveWeights(g, Path("a.ldnw"));
  SaveWeights(g, Path("b.ldnw"));
  EXPECT_EQ(ReadFile(Path("a.ldnw")), ReadFile(Path("b.ldnw")));
  const std::string bytes = ReadFile(Path("a.ldnw"));
  EXPECT_EQ(bytes.substr(0, 4), "LDNW");
  EXPECT_EQ(bytes[4], 1);
}

TEST_F(WeightsTest, TruncatedFileLeavesGraphUntouched) {
  FloatGraph src = FloatGraph::Compile(ParseArch(kMinimal), 3);
  const std::string bytes = SerializeWeights(src);
  FloatGraph dst = FloatGraph::Compile(ParseArch(kMinimal), 4);
  const std::string before = SerializeWeights(dst);
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      DeserializeWeights(dst, bytes.substr(0, cut));
      FAIL() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kFormat);
    }
    EXPECT_EQ(SerializeWeights(dst), before);
  }
}

TEST_F(WeightsTest, NamedErrors) {
  FloatGraph g = FloatGraph::Compile(ParseArch(kMinimal), 3);
  std::string bytes = SerializeWeights(g);
  auto expect_error = [&](const std::string& payload, const std::string& needle) {
    try {
      DeserializeWeights(g, payload);
      ADD_FAILURE() << needle;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_error(bad_magic, "magic");
  std::string bad_version = bytes;
  bad_version[4] = 2;
  expect_error(bad_version, "version");
  // A graph with a wider conv: same names, different shapes.
  ArchSpec wider = ParseArch(kMinimal);
  wider.FindNode("c")->hp.c = 5;
  FloatGraph gw = FloatGraph::Compile(wider, 3);
  expect_error(SerializeWeights(gw), "shape mismatch for tensor 'c.weight'");
  // A graph with an extra node is missing tensors in the smaller file.
  ArchSpec extra = ParseArch(kMinimal);
  extra.nodes.push_back({"b", OpKind::kBn, {}});
  extra.edges = {{"input", "c"}, {"c", "b"}, {"b", "g"}, {"g", "h"}};
  FloatGraph ge = FloatGraph::Compile(extra, 3);
  try {
    DeserializeWeights(ge, bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing tensor 'b.gamma'"), std::string::npos)
        << e.what();
  }
  EXPECT_THROW(LoadWeights(g, Path("does_not_exist.ldnw")), Error);
}

}  // namespace
}  // namespace cforge
