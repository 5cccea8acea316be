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

#ifndef RSNN_CLASSIFIER_HPP_
#define RSNN_CLASSIFIER_HPP_

#include <functional>
#include <vector>

#include "rsnn/tape.hpp"

namespace rsnn {

/// A model as seen by an adversary: a differentiable logits function (which
/// for SNNs carries the chosen surrogate backward path) and the exact
/// prediction function used to judge success.
struct Classifier {
  std::function<Var(Tape&, Var x)> logits;
  std::function<Tensor(const Tensor& x)> predict_logits;
};

std::vector<int> predict_labels(const Classifier& c, const Tensor& x);

}  // namespace rsnn

#endif  // RSNN_CLASSIFIER_HPP_
