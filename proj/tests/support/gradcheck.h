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

#ifndef CFORGE_TESTS_SUPPORT_GRADCHECK_H_
#define CFORGE_TESTS_SUPPORT_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cforge/ops.h"
#include "cforge/tape.h"
#include "cforge/tensor.h"

namespace cforge::testing {

// Central-difference gradient oracle in 64-bit. Independent of the tape: the
// numeric side only ever evaluates the loss forward.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor index>[<element>] analytic=.. numeric=.."
  std::int64_t checked = 0;
};

// Magnitudes below this are compared on an absolute scale so that
// near-zero gradients do not turn FD round-off into huge relative errors.
inline constexpr double kGradCheckFloor = 1e-3;

using LossFn = std::function<Tensor64(Tape64&)>;

inline GradCheckResult CheckGradients(const LossFn& loss_fn,
                                      std::vector<Tensor64> wrt,
                                      double h = 1e-5,
                                      std::int64_t max_elements_per_tensor = -1) {
  for (Tensor64& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape64 tape;
    Tensor64 loss = loss_fn(tape);
    tape.Backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor64& t : wrt) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
  }
  GradCheckResult result;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto values = wrt[ti].data();
    const std::int64_t n = static_cast<std::int64_t>(values.size());
    std::int64_t stride = 1;
    if (max_elements_per_tensor > 0 && n > max_elements_per_tensor) {
      stride = (n + max_elements_per_tensor - 1) / max_elements_per_tensor;
    }
    for (std::int64_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + h;
      Tape64 plus_tape = Tape64::Inference();
      const double f_plus = loss_fn(plus_tape).item();
      values[i] = saved - h;
      Tape64 minus_tape = Tape64::Inference();
      const double f_minus = loss_fn(minus_tape).item();
      values[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[ti][static_cast<std::size_t>(i)];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = std::to_string(ti) + "[" + std::to_string(i) +
                       "] analytic=" + std::to_string(a) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

inline Tensor64 RandomTensor64(const Shape& shape, std::uint64_t seed,
                               double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(NumElements(shape)));
  for (double& x : v) x = dist(rng);
  return Tensor64(shape, std::move(v));
}

inline Tensor RandomTensor(const Shape& shape, std::uint64_t seed,
                           float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(NumElements(shape)));
  for (float& x : v) x = dist(rng);
  return Tensor(shape, std::move(v));
}

// Projects an arbitrary-shaped output onto a scalar with fixed random
// weights, so every output element contributes a distinct gradient.
inline Tensor64 ProjectToScalar(Tape64& tape, const Tensor64& y,
                                std::uint64_t seed) {
  Tensor64 r = RandomTensor64(y.shape(), seed ^ 0x5bd1e995ULL);
  return Sum(tape, Mul(tape, y, r));
}

}  // namespace cforge::testing

#endif  // CFORGE_TESTS_SUPPORT_GRADCHECK_H_
