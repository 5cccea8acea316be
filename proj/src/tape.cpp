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

#include "rsnn/tape.hpp"

#include <stdexcept>

namespace rsnn {

const Tensor& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw std::logic_error("op input recorded on a different tape");
    if (nodes_[static_cast<std::size_t>(in.id)].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::logic_error("invalid tape variable");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::logic_error("invalid tape variable");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
bool Tape::has_grad(Var v) const { return node(v).has_grad; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.has_grad) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                     shape_str(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  float* dst = n.grad.ptr();
  const float* src = g.ptr();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) {
    throw ShapeError("backward() without seed needs a scalar root, got " +
                     shape_str(value(root).shape()));
  }
  backward(root, Tensor(value(root).shape(), 1.0f));
}

void Tape::backward(Var root, const Tensor& seed) {
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!node(root).requires_grad) return;
  accumulate(root.id, seed);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    // The callback only touches earlier nodes; nodes_ never reallocates here.
    n.backward(*this, n.grad);
  }
}

}  // namespace rsnn
