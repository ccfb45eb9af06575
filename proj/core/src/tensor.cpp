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

#include "coatnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "coatnet/autodiff.hpp"

namespace coatnet {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("invalid shape: rank 0");
  for (int64_t e : shape) {
    if (e < 1) throw ShapeError("invalid shape " + shape_str(shape));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  check_shape(shape_);
  numel_ = shape_numel(shape_);
  if (static_cast<int64_t>(values.size()) != numel_) {
    throw ShapeError("shape " + shape_str(shape_) + " needs " +
                     std::to_string(numel_) + " values, got " +
                     std::to_string(values.size()));
  }
  data_ = std::make_shared<std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  check_shape(shape);
  return Tensor(shape, std::vector<T>(shape_numel(shape), value));
}

template <typename T>
Tensor<T> Tensor<T>::trunc_normal(const Shape& shape, double stddev,
                                  uint64_t seed) {
  check_shape(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<T> values(shape_numel(shape));
  const double bound = 2.0 * stddev;
  for (T& v : values) {
    v = static_cast<T>(std::clamp(normal(rng), -bound, bound));
  }
  return Tensor(shape, std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::create(const Shape& shape, Init init, double value,
                            uint64_t seed) {
  switch (init) {
    case Init::kZeros:
      return zeros(shape);
    case Init::kOnes:
      return ones(shape);
    case Init::kConstant:
      return full(shape, static_cast<T>(value));
    case Init::kTruncNormal:
      return trunc_normal(shape, value, seed);
  }
  throw ConfigError("unknown init");
}

template <typename T>
int64_t Tensor<T>::dim(int64_t axis) const {
  const int64_t r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel_ != 1) throw ShapeError("item() on " + shape_str(shape_));
  return (*data_)[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int64_t>(index.size()) != rank()) {
    throw ShapeError("index rank mismatch for " + shape_str(shape_));
  }
  int64_t offset = 0;
  std::size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) throw ShapeError("index out of range");
    offset = offset * shape_[axis] + i;
    ++axis;
  }
  return (*data_)[offset];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape_, *data_);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out = *this;
  out.node_.reset();
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped_view(const Shape& shape) const {
  check_shape(shape);
  if (shape_numel(shape) != numel_) {
    throw ShapeError("cannot view " + shape_str(shape_) + " as " +
                     shape_str(shape));
  }
  Tensor out = detach();
  out.shape_ = shape;
  return out;
}

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
  std::vector<U> values(data_->begin(), data_->end());
  return Tensor<U>(shape_, std::move(values));
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (on) {
    auto node = std::make_shared<autodiff::Node<T>>();
    node->numel = numel_;
    node_ = std::move(node);
  } else {
    node_.reset();
  }
  return *this;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  return std::equal(da.begin(), da.end(), db.begin());
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(da[i]) -
                             static_cast<double>(db[i])));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Autodiff bookkeeping.

template <typename T>
std::span<T> GradBuffers<T>::get(const autodiff::Node<T>* node) {
  auto& buf = buffers_[node];
  if (buf.empty()) buf.assign(node->numel, T(0));
  return {buf.data(), buf.size()};
}

template <typename T>
std::vector<T>* GradBuffers<T>::find(const autodiff::Node<T>* node) {
  auto it = buffers_.find(node);
  return it == buffers_.end() ? nullptr : &it->second;
}

template <typename T>
std::vector<T> GradBuffers<T>::take(const autodiff::Node<T>* node) {
  auto it = buffers_.find(node);
  if (it == buffers_.end()) return {};
  std::vector<T> out = std::move(it->second);
  buffers_.erase(it);
  return out;
}

template <typename T>
Tensor<T> GradMap<T>::operator[](const Tensor<T>& param) const {
  auto it = grads_.find(param.node().get());
  if (it == grads_.end()) return Tensor<T>::zeros(param.shape());
  return Tensor<T>(param.shape(), it->second);
}

template <typename T>
bool GradMap<T>::reached(const Tensor<T>& param) const {
  return grads_.count(param.node().get()) > 0;
}

template <typename T>
void GradMap<T>::set(const Tensor<T>& param, std::vector<T> grad) {
  if (static_cast<int64_t>(grad.size()) != param.numel()) {
    throw ShapeError("gradient size does not match parameter");
  }
  if (!param.node()) {
    throw GraphError("GradMap::set on a tensor that does not require grad");
  }
  grads_[param.node().get()] = std::move(grad);
}

template <typename T>
double GradMap<T>::global_norm(std::span<const Tensor<T>> params) const {
  double sq = 0.0;
  for (const auto& p : params) {
    auto it = grads_.find(p.node().get());
    if (it == grads_.end()) continue;
    for (T g : it->second) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

template <typename T>
void GradMap<T>::scale(T factor) {
  for (auto& [node, g] : grads_) {
    for (T& v : g) v *= factor;
  }
}

namespace {

template <typename T>
Tape<T>*& active_tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tape<T>::Tape() : previous_(active_tape_slot<T>()) {
  active_tape_slot<T>() = this;
}

template <typename T>
Tape<T>::~Tape() {
  active_tape_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_tape_slot<T>();
}

template <typename T>
void Tape<T>::record(const std::shared_ptr<autodiff::Node<T>>& node) {
  if (consumed_) throw GraphError("tape already consumed by backward()");
  node->tape = this;
  node->tape_pos = nodes_.size();
  nodes_.push_back(node);
}

template <typename T>
GradMap<T> Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || !loss.requires_grad() || loss.node()->is_leaf() ||
      loss.node()->tape != this) {
    throw GraphError("backward() on a tensor with no recorded graph");
  }
  if (loss.numel() != 1) {
    throw GraphError("backward() needs a scalar loss, got " +
                     shape_str(loss.shape()));
  }
  if (consumed_) throw GraphError("backward() called twice on one tape");
  consumed_ = true;

  GradBuffers<T> buffers;
  buffers.get(loss.node().get())[0] = T(1);
  for (std::size_t pos = loss.node()->tape_pos + 1; pos-- > 0;) {
    const auto& node = nodes_[pos];
    std::vector<T> grad = buffers.take(node.get());
    if (grad.empty()) continue;
    node->backward(std::span<const T>(grad), buffers);
  }
  // Drop saved activations now; outputs of this tape may outlive it.
  for (const auto& node : nodes_) node->backward = nullptr;
  nodes_.clear();
  nodes_.shrink_to_fit();
  // Whatever is left in the buffers belongs to leaves.
  return GradMap<T>(buffers.release());
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<double> Tensor<float>::cast<double>() const;
template Tensor<float> Tensor<double>::cast<float>() const;
template Tensor<float> Tensor<float>::cast<float>() const;
template Tensor<double> Tensor<double>::cast<double>() const;
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);
template bool bit_equal(const Tensor<float>&, const Tensor<float>&);
template bool bit_equal(const Tensor<double>&, const Tensor<double>&);
template double max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);
template class GradBuffers<float>;
template class GradBuffers<double>;
template class GradMap<float>;
template class GradMap<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace coatnet
