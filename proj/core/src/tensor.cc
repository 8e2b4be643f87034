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

#include "cforge/tensor.h"

#include <sstream>
#include <utility>

#include "cforge/error.h"

namespace cforge {

std::int64_t NumElements(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t extent : shape) {
    if (extent < 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "negative extent in shape " + ShapeString(shape));
    }
    n *= extent;
  }
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ",";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape) : impl_(std::make_shared<Impl>()) {
  const std::int64_t n = NumElements(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), T(0));
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : impl_(std::make_shared<Impl>()) {
  const std::int64_t n = NumElements(shape);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw Error(ErrorCode::kShapeMismatch,
                "shape " + ShapeString(shape) + " needs " + std::to_string(n) +
                    " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::Full(Shape shape, T value) {
  BasicTensor t(std::move(shape));
  for (T& v : t.impl_->data) v = value;
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::Scalar(T value) {
  return BasicTensor(Shape{}, std::vector<T>{value});
}

template <typename T>
std::int64_t BasicTensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw Error(ErrorCode::kInvalidArgument,
                "axis " + std::to_string(axis) + " out of range for shape " +
                    ShapeString(impl_->shape));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "item() needs a single-element tensor, got shape " +
                    ShapeString(impl_->shape));
  }
  return impl_->data[0];
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::Clone() const {
  BasicTensor copy;
  copy.impl_ = std::make_shared<Impl>();
  copy.impl_->shape = impl_->shape;
  copy.impl_->data = impl_->data;
  copy.impl_->requires_grad = impl_->requires_grad;
  return copy;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace cforge
