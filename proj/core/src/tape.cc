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

#include "cforge/tape.h"

#include <utility>

#include "cforge/error.h"

namespace cforge {

template <typename T>
bool BasicTape<T>::ShouldRecord(
    std::initializer_list<const TensorType*> inputs) const {
  if (!recording_) return false;
  for (const TensorType* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void BasicTape<T>::Record(std::string op, std::vector<TensorType> inputs,
                          TensorType output, std::function<void()> backward) {
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::move(op), std::move(inputs), std::move(output),
                           std::move(backward)});
}

template <typename T>
void BasicTape<T>::Backward(const TensorType& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "backward needs a scalar loss, got shape " +
                    (loss.defined() ? ShapeString(loss.shape())
                                    : std::string("<undefined>")));
  }
  bool reachable = false;
  for (const Entry& e : entries_) {
    if (e.output.SameStorage(loss)) {
      reachable = true;
      break;
    }
  }
  if (!reachable) {
    throw Error(ErrorCode::kInvalidArgument,
                "loss was not produced by an op recorded on this tape");
  }
  TensorType seed = loss;
  seed.mutable_grad()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace cforge
