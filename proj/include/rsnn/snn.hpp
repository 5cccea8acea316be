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

#ifndef RSNN_SNN_HPP_
#define RSNN_SNN_HPP_

#include <vector>

#include "rsnn/classifier.hpp"
#include "rsnn/network.hpp"
#include "rsnn/surrogate.hpp"

namespace rsnn {

struct LifResult {
  Tensor spikes;
  Tensor v_next;
};

/// v- = tau*v_prev + current; o = H(v- - vth) with H(0) = 1; v = v-*(1-o).
LifResult lif_step(const Tensor& v_prev, const Tensor& current, float vth, float tau);

/// Time-major [T*N, ...] copy of x; every timestep sees x itself.
Tensor direct_encode(const Tensor& x, int timesteps);

/// Spiking layer over a time-major current [T*N, ...] with a scalar
/// threshold var of shape {1}. Elementwise surrogates give BPTT with the reset
/// gate held constant; bptr spreads the derivative of
/// clamp(mean_t(I)/vth, 0, 1) uniformly over timesteps. When spikes_out is
/// non-null it receives the binary spike tensor.
Var lif_layer(Var current, Var vth, int timesteps, float tau, const SurrogateSpec& surrogate,
              Tensor* spikes_out = nullptr);

/// relu(I)/vth per timestep: the rate-approximating stand-in used for the
/// conversion-based backward rule.
Var relu_rate(Var current, Var vth);

/// Spikes recorded per spiking layer, each [T*N, neuron shape...].
struct SpikeTrace {
  int timesteps = 0;
  int batch = 0;
  std::vector<Tensor> layers;
};

struct SnnOptions {
  int timesteps = 8;
  float tau = 1.0f;
  SurrogateSpec surrogate = SurrogateSpec::pcw(1.0f);
  bool train = false;
  StatsLog* stats = nullptr;
  /// When >= 0, return the (post-tdBN) pre-activation of that spiking layer.
  int stop_at_spiking = -1;
};

std::string threshold_name(int layer);

/// Direct-coded simulation; logits are the output layer's W o(t) + b summed
/// over T. Batch-norm layers see the whole time-major batch, so their
/// statistics pool over batch and time.
Var snn_forward(const NetworkSpec& spec, const ParamMap& params, const Bindings& vars, Var x,
                const SnnOptions& opt, SpikeTrace* trace = nullptr);

/// Eval-mode logits in batches.
Tensor snn_logits(const Model& model, const Tensor& x, int timesteps, float tau, int batch = 128,
                  SpikeTrace* trace = nullptr);

/// Eval-mode classifier whose backward path follows `surrogate`; the model
/// must outlive it.
Classifier snn_classifier(const Model& model, int timesteps, float tau, const SurrogateSpec& surrogate);

/// Per-layer spiking thresholds of a converted model.
std::vector<float> thresholds(const Model& model);

}  // namespace rsnn

#endif  // RSNN_SNN_HPP_
