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

#include "rsnn/optim.hpp"

#include <cmath>
#include <numbers>

namespace rsnn {

float cosine_lr(float base, int step, int total) {
  if (total <= 0) return base;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return static_cast<float>(base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

void sgd_step(Tensor& w, const Tensor& grad, Tensor& velocity, float lr, float momentum,
              float weight_decay, const LayerMask* mask) {
  if (w.shape() != grad.shape()) throw ShapeError("sgd_step: gradient shape " + shape_str(grad.shape()));
  if (velocity.shape() != w.shape()) velocity = Tensor(w.shape());
  if (mask && mask->shape != w.shape()) throw ShapeError("sgd_step: mask shape " + shape_str(mask->shape));
  float* pw = w.ptr();
  float* pv = velocity.ptr();
  const float* pg = grad.ptr();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (mask && !mask->bits[i]) {
      pv[i] = 0.0f;
      continue;
    }
    const float g = pg[i] + weight_decay * pw[i];
    pv[i] = momentum * pv[i] + g;
    pw[i] -= lr * pv[i];
  }
}

bool decays(const std::string& param) { return !param.ends_with(".threshold"); }

void Sgd::step(ParamMap& params, const std::map<std::string, Tensor>& grads, float lr,
               const SparsityMask* mask) {
  for (const auto& [name, g] : grads) {
    Tensor& w = params.at(name);
    const LayerMask* m = nullptr;
    if (mask) {
      auto it = mask->layers.find(name);
      if (it != mask->layers.end()) m = &it->second;
    }
    sgd_step(w, g, velocity_[name], lr, cfg_.momentum, decays(name) ? cfg_.weight_decay : 0.0f, m);
  }
}

}  // namespace rsnn
