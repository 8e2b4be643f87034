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

#ifndef CFORGE_TENSOR_H_
#define CFORGE_TENSOR_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cforge {

// Extents in NCHW order for 4-D activations, [N, D] for fully-connected
// inputs, and {} for scalars.
using Shape = std::vector<std::int64_t>;

std::int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major array with an optional gradient slot.
//
// A BasicTensor is a shared handle: copies alias the same storage, which is
// what lets the tape refer back to inputs and outputs during the backward
// sweep. Use Clone() for an independent copy.
//
// float is the working precision; double instantiations exist so gradient
// checks can run in 64-bit.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape);
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor Full(Shape shape, T value);
  static BasicTensor Scalar(T value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const {
    return static_cast<std::int64_t>(impl_->data.size());
  }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* raw() { return impl_->data.data(); }
  const T* raw() const { return impl_->data.data(); }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  // Zero-filled on first access. The gradient slot belongs to the shared
  // storage, so it is writable through any handle, including const ones.
  std::span<T> mutable_grad() const;
  void zero_grad() { impl_->grad.clear(); }

  BasicTensor Clone() const;
  bool SameStorage(const BasicTensor& other) const {
    return impl_ == other.impl_;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace cforge

#endif  // CFORGE_TENSOR_H_
