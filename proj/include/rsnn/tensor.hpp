// Copyright 2026 The rsnn Authors
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

#ifndef RSNN_TENSOR_HPP_
#define RSNN_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsnn {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major float32 array with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }
  static Tensor from(Shape shape, std::initializer_list<float> values);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* ptr() { return data_.data(); }
  const float* ptr() const { return data_.data(); }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Value of a one-element tensor.
  float item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  void fill(float v);

  /// Rows [begin, end) along the leading axis.
  Tensor slice_rows(int begin, int end) const;
  /// Gathers leading-axis rows in the given order.
  Tensor gather_rows(std::span<const std::size_t> rows) const;

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Largest elementwise |a - b|; shapes must agree.
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Counter-based deterministic generator: draw k of stream s under seed is a
/// pure function of (seed, s, k).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  float uniform();
  float uniform(float lo, float hi);
  /// Standard normal via Box-Muller.
  float normal();
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  std::vector<std::size_t> permutation(std::size_t n);
  /// Independent generator keyed by this one's seed/stream and `stream`.
  Rng fork(std::uint64_t stream) const;

  Tensor uniform_tensor(Shape shape, float lo, float hi);
  Tensor normal_tensor(Shape shape, float mean = 0.0f, float stddev = 1.0f);

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace rsnn

#endif  // RSNN_TENSOR_HPP_
