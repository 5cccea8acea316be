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

#ifndef RSNN_OPS_HPP_
#define RSNN_OPS_HPP_

#include <optional>
#include <span>
#include <vector>

#include "rsnn/tape.hpp"

// Differentiable primitives. Each op computes its output eagerly and records
// a backward rule on the tape of its inputs.
namespace rsnn::ops {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(Var a, const Tensor& c);
Var sum(Var a);
Var mean(Var a);

Var matmul(Var a, Var b);
/// x[N,in] * w[out,in]^T (+ b[out]).
Var linear(Var x, Var w, std::optional<Var> b = std::nullopt);
Var conv2d(Var x, Var w, std::optional<Var> b, int stride, int padding);
Var avgpool2d(Var x, int k);
Var reshape(Var x, Shape shape);
Var relu(Var x);

struct BatchNormOptions {
  float eps = 1e-5f;
  bool train = false;
};

/// Batch statistics observed by a train-mode batch_norm call.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> unbiased_var;
};

/// Per-channel normalization over every axis except 1, followed by the
/// affine map scale * xhat + shift. Train mode uses batch statistics (and
/// reports them through `stats` when non-null); eval mode uses the running
/// buffers.
Var batch_norm(Var x, Var scale, Var shift, const Tensor& running_mean,
               const Tensor& running_var, const BatchNormOptions& opt,
               BatchStats* stats = nullptr);

/// x[T*N, ...] (time-major) -> sum over T -> [N, ...].
Var sum_over_time(Var x, int timesteps);
/// Tiles x[N,...] into a time-major [T*N,...] batch.
Var repeat_time(Var x, int timesteps);

/// Mean cross-entropy over the batch; accumulated in double.
Var cross_entropy(Var logits, std::span<const int> labels);
/// Mean over the batch of KL(softmax(p_logits) || softmax(q_logits));
/// gradients flow into both arguments.
Var kl_divergence(Var p_logits, Var q_logits);

/// Weight gated by a fixed binary mask with a straight-through path to the
/// importance scores: forward w * mask, d/dw = g * mask, d/dscores = g * w.
Var masked_weight_ste(Var w, Var scores, const Tensor& mask);

/// Row-wise argmax of a [N,K] tensor.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace rsnn::ops

#endif  // RSNN_OPS_HPP_
