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

#ifndef COATNET_AUTODIFF_HPP_
#define COATNET_AUTODIFF_HPP_

#include <initializer_list>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "coatnet/tensor.hpp"

namespace coatnet {

// Gradient accumulators for one backward pass, keyed by node.
template <typename T>
class GradBuffers {
 public:
  // Zero-initialised on first access; backward functions add into it.
  std::span<T> get(const autodiff::Node<T>* node);
  std::vector<T>* find(const autodiff::Node<T>* node);
  std::vector<T> take(const autodiff::Node<T>* node);
  std::unordered_map<const autodiff::Node<T>*, std::vector<T>> release() {
    return std::move(buffers_);
  }

 private:
  std::unordered_map<const autodiff::Node<T>*, std::vector<T>> buffers_;
};

// Parameter -> gradient. Parameters that were not reachable from the loss
// report an all-zero gradient of their own shape.
template <typename T>
class GradMap {
 public:
  using Storage = std::unordered_map<const autodiff::Node<T>*, std::vector<T>>;

  GradMap() = default;
  explicit GradMap(Storage grads) : grads_(std::move(grads)) {}

  Tensor<T> operator[](const Tensor<T>& param) const;
  bool reached(const Tensor<T>& param) const;
  void set(const Tensor<T>& param, std::vector<T> grad);
  std::size_t size() const { return grads_.size(); }

  // L2 norm over all gradients of `params`.
  double global_norm(std::span<const Tensor<T>> params) const;
  // Scales all stored gradients in place.
  void scale(T factor);

 private:
  Storage grads_;
};

// Append-only record of the operations of one forward pass. Constructing a
// Tape makes it the active tape of the calling thread (for scalar type T);
// ops record themselves only while a tape is active and at least one input
// requires a gradient. Append order is a topological order.
template <typename T>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(const std::shared_ptr<autodiff::Node<T>>& node);
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from `loss` (a one-element tensor recorded on this tape).
  // May be called once; the tape is released afterwards.
  GradMap<T> backward(const Tensor<T>& loss);

 private:
  std::vector<std::shared_ptr<autodiff::Node<T>>> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

namespace autodiff {

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Records `backward` as the gradient rule producing `out`.
template <typename T>
void attach(Tensor<T>& out, typename Node<T>::BackwardFn backward) {
  auto node = std::make_shared<Node<T>>();
  node->numel = out.numel();
  node->backward = std::move(backward);
  Tape<T>::active()->record(node);
  out.set_node(std::move(node));
}

}  // namespace autodiff
}  // namespace coatnet

#endif  // COATNET_AUTODIFF_HPP_
