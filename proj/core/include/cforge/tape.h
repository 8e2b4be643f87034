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

#ifndef CFORGE_TAPE_H_
#define CFORGE_TAPE_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "cforge/tensor.h"

namespace cforge {

// Ordered record of op applications for reverse-mode differentiation.
//
// Ops append one entry per application, after their inputs were produced, so
// the list is topologically ordered by construction. Backward() walks it in
// exact reverse order; each entry's closure reads the output gradient and
// accumulates (+=) into its inputs, which is how fan-out sums its gradients.
template <typename T>
class BasicTape {
 public:
  using TensorType = BasicTensor<T>;

  struct Entry {
    std::string op;
    std::vector<TensorType> inputs;
    TensorType output;
    std::function<void()> backward;
  };

  explicit BasicTape(bool recording = true) : recording_(recording) {}

  // A tape that never records; ops run forward-only.
  static BasicTape Inference() { return BasicTape(false); }

  bool recording() const { return recording_; }

  // True when an op over `inputs` must record itself: the tape is live and at
  // least one input participates in differentiation.
  bool ShouldRecord(std::initializer_list<const TensorType*> inputs) const;

  // Marks `output` as differentiable and appends the entry.
  void Record(std::string op, std::vector<TensorType> inputs,
              TensorType output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad tensor.
  // Throws if loss is not a scalar or was not produced on this tape.
  void Backward(const TensorType& loss);

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  void Clear() { entries_.clear(); }

 private:
  bool recording_;
  std::vector<Entry> entries_;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

extern template class BasicTape<float>;
extern template class BasicTape<double>;

}  // namespace cforge

#endif  // CFORGE_TAPE_H_
