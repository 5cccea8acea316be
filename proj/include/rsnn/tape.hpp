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

#ifndef RSNN_TAPE_HPP_
#define RSNN_TAPE_HPP_

#include <functional>
#include <initializer_list>
#include <vector>

#include "rsnn/tensor.hpp"

namespace rsnn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const;
  bool requires_grad() const;
};

/// Build-per-forward gradient tape.
///
/// Nodes are appended in execution order, which is a topological order of the
/// graph, so backward() walks the node list in reverse. Every node owns its
/// output value; clear() releases all of them.
class Tape {
 public:
  /// Receives the gradient of the node's output and pushes contributions to
  /// its inputs through accumulate().
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op output. The backward rule is kept only when at least one
  /// input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Gradient of the last backward() root w.r.t. `v`; zeros if none reached it.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  void accumulate(int id, const Tensor& g);
  void accumulate(Var v, const Tensor& g) { accumulate(v.id, g); }

  /// Seeds d(root)/d(root) = 1; root must hold a single element.
  void backward(Var root);
  void backward(Var root, const Tensor& seed);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace rsnn

#endif  // RSNN_TAPE_HPP_
