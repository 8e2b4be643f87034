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

#include "cforge/train.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "cforge/error.h"
#include "cforge/parallel.h"
#include "cforge/random.h"

namespace cforge {

namespace {

void CheckProbRows(const char* what, const Shape& shape, const Shape& expect) {
  if (shape != expect) {
    throw Error(ErrorCode::kShapeMismatch, std::string("discrepancy loss: ") + what +
                                               " has shape " + ShapeString(shape) +
                                               ", expected " + ShapeString(expect));
  }
}

// Percentile by nearest rank on a sorted copy.
double Percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

void TrainConfig::Validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0,1)");
  if (!(lambda_d >= 0.0)) fail("lambda_d must be >= 0");
}

template <typename T>
BasicTensor<T> DiscrepancyLoss(BasicTape<T>& tape, const BasicTensor<T>& p1,
                               const BasicTensor<T>& p2, const BasicTensor<T>& agg,
                               const std::vector<int>& labels, double lambda_d) {
  if (agg.rank() != 2) {
    throw Error(ErrorCode::kShapeMismatch,
                "discrepancy loss: agg must be [N,K], got " + ShapeString(agg.shape()));
  }
  const std::int64_t n = agg.dim(0), k = agg.dim(1);
  CheckProbRows("p1", p1.shape(), agg.shape());
  CheckProbRows("p2", p2.shape(), agg.shape());
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw Error(ErrorCode::kShapeMismatch, "discrepancy loss: " + std::to_string(labels.size()) +
                                               " labels for " + std::to_string(n) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= k) {
      throw Error(ErrorCode::kInvalidArgument,
                  "discrepancy loss: label " + std::to_string(y) + " out of range");
    }
  }
  const double eps = kCrossEntropyEpsilon;
  auto a = agg.data(), q1 = p1.data(), q2 = p2.data();
  double loss = 0.0;
  for (std::int64_t r = 0; r < n; ++r) {
    const std::int64_t t = r * k + labels[r];
    loss -= std::log(std::max<double>(a[t], eps)) +
            0.5 * std::log(std::max<double>(q1[t], eps)) +
            0.5 * std::log(std::max<double>(q2[t], eps));
    double l1 = 0.0;
    for (std::int64_t j = 0; j < k; ++j) l1 += std::abs(double(q1[r * k + j]) - q2[r * k + j]);
    loss -= lambda_d * l1;
  }
  BasicTensor<T> out = BasicTensor<T>::Scalar(static_cast<T>(loss / static_cast<double>(n)));
  if (tape.ShouldRecord({&p1, &p2, &agg})) {
    tape.Record("discrepancy_loss", {p1, p2, agg}, out,
                [p1, p2, agg, out, labels, lambda_d, n, k, eps]() mutable {
                  const double g = out.grad()[0] / static_cast<double>(n);
                  auto a = agg.data(), q1 = p1.data(), q2 = p2.data();
                  auto grad_or_null = [](const BasicTensor<T>& t) {
                    return t.requires_grad() ? t.mutable_grad() : std::span<T>();
                  };
                  auto da = grad_or_null(agg), d1 = grad_or_null(p1), d2 = grad_or_null(p2);
                  for (std::int64_t r = 0; r < n; ++r) {
                    const std::int64_t t = r * k + labels[r];
                    if (!da.empty() && a[t] > eps) da[t] -= static_cast<T>(g / a[t]);
                    if (!d1.empty() && q1[t] > eps) d1[t] -= static_cast<T>(0.5 * g / q1[t]);
                    if (!d2.empty() && q2[t] > eps) d2[t] -= static_cast<T>(0.5 * g / q2[t]);
                    for (std::int64_t j = 0; j < k; ++j) {
                      const double diff = double(q1[r * k + j]) - q2[r * k + j];
                      const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                      if (!d1.empty()) d1[r * k + j] -= static_cast<T>(lambda_d * g * s);
                      if (!d2.empty()) d2[r * k + j] += static_cast<T>(lambda_d * g * s);
                    }
                  }
                });
  }
  return out;
}

template BasicTensor<float> DiscrepancyLoss(BasicTape<float>&, const BasicTensor<float>&,
                                            const BasicTensor<float>&,
                                            const BasicTensor<float>&, const std::vector<int>&,
                                            double);
template BasicTensor<double> DiscrepancyLoss(BasicTape<double>&, const BasicTensor<double>&,
                                             const BasicTensor<double>&,
                                             const BasicTensor<double>&,
                                             const std::vector<int>&, double);

double MeanHeadDiscrepancy(std::span<const float> p1, std::span<const float> p2,
                           std::int64_t classes) {
  if (p1.size() != p2.size() || classes < 1 || p1.size() % classes != 0) {
    throw Error(ErrorCode::kShapeMismatch, "head discrepancy: mismatched probability rows");
  }
  if (p1.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) total += std::abs(double(p1[i]) - p2[i]);
  return total / static_cast<double>(p1.size() / classes);
}

int ArgMax(std::span<const float> row) {
  int best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = static_cast<int>(j);
  }
  return best;
}

Tensor ImageBatch(const std::vector<PlateSample>& samples, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image batch");
  const int h = samples[idx[0]].height, w = samples[idx[0]].width;
  Tensor x(Shape{static_cast<std::int64_t>(idx.size()), 1, h, w});
  auto xs = x.data();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const PlateSample& s = samples[idx[b]];
    if (s.height != h || s.width != w) {
      throw Error(ErrorCode::kShapeMismatch, "images in a batch must share one size");
    }
    // Least-squares plane a + bx*u + by*v over centered coordinates; on a
    // full grid the three normal equations decouple.
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    double sum = 0.0, su = 0.0, sv = 0.0, suu = 0.0, svv = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double p = s.pixels[y * w + x];
        sum += p;
        su += (x - cx) * p;
        sv += (y - cy) * p;
        suu += (x - cx) * (x - cx);
        svv += (y - cy) * (y - cy);
      }
    }
    const double a = sum / static_cast<double>(s.pixels.size());
    const double bx = suu > 0 ? su / suu : 0.0;
    const double by = svv > 0 ? sv / svv : 0.0;
    float* dst = xs.data() + b * s.pixels.size();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double plane = a + bx * (x - cx) + by * (y - cy);
        dst[y * w + x] = static_cast<float>((s.pixels[y * w + x] - plane) / kPixelScale);
      }
    }
  }
  return x;
}

std::vector<EpochStats> Train(FloatGraph& graph, const std::vector<PlateSample>& train,
                              const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.Validate();
  if (!graph.ends_in_dualhead()) {
    throw Error(ErrorCode::kInvalidArgument, "training needs a graph ending in a dualhead");
  }
  std::vector<EpochStats> history;
  if (cfg.epochs == 0) return history;
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  std::vector<Tensor> params = graph.Parameters();
  Sgd<float> sgd(cfg.lr, cfg.momentum);
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = MakeRng(cfg.seed, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train[i].defective ? 1 : 0);
      Tape tape;
      auto out = graph.Forward(tape, ImageBatch(train, idx), Mode::kTrain);
      Tensor loss = DiscrepancyLoss(tape, out.heads.p1, out.heads.p2, out.heads.agg, labels,
                                    cfg.lambda_d);
      if (!std::isfinite(loss.item())) {
        throw Error(ErrorCode::kNumeric, "non-finite loss at epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(batches));
      }
      for (Tensor& p : params) p.zero_grad();
      tape.Backward(loss);
      try {
        sgd.Step(params);
      } catch (const Error& e) {
        throw Error(ErrorCode::kNumeric, std::string(e.what()) + " at epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(batches));
      }
      const auto agg = out.heads.agg.data();
      const std::int64_t k = out.heads.agg.dim(1);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        correct += ArgMax(std::span<const float>(agg.data() + b * k, k)) == labels[b];
      }
      loss_sum += loss.item();
      ++batches;
    }
    EpochStats stats{epoch, loss_sum / batches,
                     100.0 * static_cast<double>(correct) / static_cast<double>(train.size())};
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

Classifier GraphClassifier(FloatGraph& graph) {
  if (!graph.ends_in_dualhead()) {
    throw Error(ErrorCode::kInvalidArgument, "classifier needs a graph ending in a dualhead");
  }
  return [&graph](const Tensor& images) {
    Tape tape = Tape::Inference();
    auto out = graph.Forward(tape, images, Mode::kEval);
    Prediction p;
    p.classes = out.heads.agg.dim(1);
    p.agg.assign(out.heads.agg.data().begin(), out.heads.agg.data().end());
    p.p1.assign(out.heads.p1.data().begin(), out.heads.p1.data().end());
    p.p2.assign(out.heads.p2.data().begin(), out.heads.p2.data().end());
    return p;
  };
}

Metrics Evaluate(const Classifier& model, const std::vector<PlateSample>& samples,
                 int batch_size) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  Metrics m;
  m.count = static_cast<std::int64_t>(samples.size());
  std::int64_t classes = 2;
  m.confusion.assign(classes, std::vector<std::int64_t>(classes, 0));
  double discrepancy = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Prediction p = model(ImageBatch(samples, idx));
    if (p.classes != classes) {
      throw Error(ErrorCode::kShapeMismatch, "evaluation expects two classes");
    }
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const int truth = samples[idx[b]].defective ? 1 : 0;
      const int pred = ArgMax(std::span<const float>(p.agg.data() + b * classes, classes));
      ++m.confusion[truth][pred];
    }
    if (!p.p1.empty()) discrepancy += MeanHeadDiscrepancy(p.p1, p.p2, classes) * idx.size();
  }
  std::int64_t correct = 0;
  for (std::int64_t c = 0; c < classes; ++c) {
    correct += m.confusion[c][c];
    const std::int64_t total = std::accumulate(m.confusion[c].begin(), m.confusion[c].end(),
                                               std::int64_t{0});
    m.per_class_accuracy.push_back(total == 0 ? std::nan("")
                                              : 100.0 * static_cast<double>(m.confusion[c][c]) /
                                                    static_cast<double>(total));
  }
  m.accuracy = m.count == 0 ? 0.0
                            : 100.0 * static_cast<double>(correct) / static_cast<double>(m.count);
  m.mean_discrepancy = m.count == 0 ? 0.0 : discrepancy / static_cast<double>(m.count);
  return m;
}

Metrics Evaluate(FloatGraph& graph, const std::vector<PlateSample>& samples) {
  return Evaluate(GraphClassifier(graph), samples);
}

double ShiftConsistency(const Classifier& model, const std::vector<PlateSample>& samples,
                        int max_shift) {
  if (max_shift < 1) throw Error(ErrorCode::kInvalidArgument, "max_shift must be >= 1");
  std::int64_t agree = 0, pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    // Shifts act on the network input, after the brightness plane is gone.
    const Tensor base_input = ImageBatch(samples, {i});
    const std::int64_t h = base_input.dim(2), w = base_input.dim(3);
    const auto src = base_input.data();
    const std::int64_t side = 2 * max_shift + 1;
    Tensor batch(Shape{side * side, 1, h, w});
    auto dst = batch.data();
    std::int64_t v = 0;
    auto put = [&](int dy, int dx) {
      float* out = dst.data() + v * h * w;
      for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t sy = ((y - dy) % h + h) % h;
        for (std::int64_t x = 0; x < w; ++x) {
          out[y * w + x] = src[sy * w + ((x - dx) % w + w) % w];
        }
      }
      ++v;
    };
    put(0, 0);
    for (int dy = -max_shift; dy <= max_shift; ++dy) {
      for (int dx = -max_shift; dx <= max_shift; ++dx) {
        if (dy != 0 || dx != 0) put(dy, dx);
      }
    }
    Prediction p = model(batch);
    const int base = ArgMax(std::span<const float>(p.agg.data(), p.classes));
    for (std::int64_t k = 1; k < v; ++k) {
      agree += ArgMax(std::span<const float>(p.agg.data() + k * p.classes, p.classes)) == base;
      ++pairs;
    }
  }
  return pairs == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(pairs);
}

std::string EnvironmentDescriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  }
  return cpu + "; hardware threads " + std::to_string(std::thread::hardware_concurrency()) +
         "; worker cap " + std::to_string(ConfiguredThreads()) + "; compiler " +
#if defined(__clang__)
         "clang " __clang_version__;
#elif defined(__GNUC__)
         "gcc " __VERSION__;
#else
         "unknown";
#endif
}

LatencyStats BenchLatency(FloatGraph& graph, int batch_size, int warmup, int reps) {
  if (batch_size < 1 || warmup < 0 || reps < 1) {
    throw Error(ErrorCode::kInvalidArgument, "bench: need batch >= 1, warmup >= 0, reps >= 1");
  }
  const FeatureShape& in = graph.plan().input;
  Tensor x(Shape{batch_size, in.c, in.h, in.w});
  Rng rng(0);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : x.data()) v = u(rng);
  auto run = [&] {
    Tape tape = Tape::Inference();
    graph.Forward(tape, x, Mode::kEval);
  };
  for (int i = 0; i < warmup; ++i) run();
  std::vector<double> per_sample;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    const auto t1 = std::chrono::steady_clock::now();
    per_sample.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                         batch_size);
  }
  LatencyStats stats;
  stats.batch_size = batch_size;
  stats.reps = reps;
  stats.median_ms_per_sample = Percentile(per_sample, 0.5);
  stats.p90_ms_per_sample = Percentile(per_sample, 0.9);
  stats.environment = EnvironmentDescriptor();
  return stats;
}

}  // namespace cforge
