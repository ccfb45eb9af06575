/* Copyright 2026 The coatnet-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef COATNET_TENSOR_HPP_
#define COATNET_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coatnet/error.hpp"

namespace coatnet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
// Throws ShapeError unless every extent is >= 1.
void check_shape(const Shape& shape);

template <typename T>
class GradBuffers;

namespace autodiff {

// One record of the autodiff tape. Leaves (trainable parameters and watched
// inputs) carry no backward function and are never appended to a tape.
template <typename T>
struct Node {
  using BackwardFn = std::function<void(std::span<const T>, GradBuffers<T>&)>;

  int64_t numel = 0;
  BackwardFn backward;
  const void* tape = nullptr;
  std::size_t tape_pos = 0;

  bool is_leaf() const { return !backward; }
};

}  // namespace autodiff

enum class Init { kZeros, kOnes, kConstant, kTruncNormal };

// Dense row-major tensor. Copies are shallow: the value buffer and the
// autodiff node are shared. Values are treated as immutable by every op;
// only optimizers write through mutable_data() between steps.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<autodiff::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(const Shape& shape) { return full(shape, T(0)); }
  static Tensor ones(const Shape& shape) { return full(shape, T(1)); }
  static Tensor full(const Shape& shape, T value);
  static Tensor scalar(T value) { return Tensor({1}, {value}); }
  // Normal(0, stddev) samples clamped to +-2 stddev.
  static Tensor trunc_normal(const Shape& shape, double stddev, uint64_t seed);
  static Tensor create(const Shape& shape, Init init, double value,
                       uint64_t seed);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  // Negative axes count from the back.
  int64_t dim(int64_t axis) const;
  int64_t numel() const { return numel_; }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  std::span<T> mutable_data() { return {data_->data(), data_->size()}; }
  const T* ptr() const { return data_->data(); }
  T item() const;
  T at(std::initializer_list<int64_t> index) const;

  Tensor clone() const;
  // Same storage, no autodiff node.
  Tensor detach() const;
  Tensor reshaped_view(const Shape& shape) const;
  template <typename U>
  Tensor<U> cast() const;

  bool requires_grad() const { return static_cast<bool>(node_); }
  // Attaches a fresh leaf node (or removes it). Gradients for this tensor are
  // reported by Tape::backward through its GradMap.
  Tensor& set_requires_grad(bool on);
  const NodePtr& node() const { return node_; }
  void set_node(NodePtr node) { node_ = std::move(node); }

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  Shape shape_;
  int64_t numel_ = 0;
  std::shared_ptr<std::vector<T>> data_;
  NodePtr node_;
};

template <typename T>
bool all_finite(const Tensor<T>& t);

// True when shapes and every value match exactly.
template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace coatnet

#endif  // COATNET_TENSOR_HPP_
