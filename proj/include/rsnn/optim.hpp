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

#ifndef RSNN_OPTIM_HPP_
#define RSNN_OPTIM_HPP_

#include <map>
#include <string>

#include "rsnn/network.hpp"

namespace rsnn {

struct SgdConfig {
  float lr = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  bool cosine = true;
};

/// base * (1 + cos(pi * step / total)) / 2; base when total <= 0.
float cosine_lr(float base, int step, int total);

/// One momentum step on a single tensor: g' = g + wd*w, v = mu*v + g',
/// w -= lr*v. With a mask, g' and v are zeroed on pruned coordinates so they
/// never move and hold no momentum.
void sgd_step(Tensor& w, const Tensor& grad, Tensor& velocity, float lr, float momentum,
              float weight_decay, const LayerMask* mask = nullptr);

/// Thresholds are not decayed; everything else trainable is.
bool decays(const std::string& param);

class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}

  /// Updates every parameter that has an entry in grads. Weights listed in
  /// the mask follow the masked rule.
  void step(ParamMap& params, const std::map<std::string, Tensor>& grads, float lr,
            const SparsityMask* mask = nullptr);

  const SgdConfig& config() const { return cfg_; }
  const std::map<std::string, Tensor>& velocity() const { return velocity_; }

 private:
  SgdConfig cfg_;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace rsnn

#endif  // RSNN_OPTIM_HPP_
