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

#ifndef RSNN_NETWORK_HPP_
#define RSNN_NETWORK_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rsnn/ops.hpp"
#include "rsnn/tape.hpp"
#include "rsnn/tensor.hpp"

namespace rsnn {

enum class LayerKind { conv, linear, batchnorm, relu, avgpool, flatten };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int out = 0;       // conv filters / linear features
  int kernel = 0;    // conv kernel width / pool window
  int stride = 1;
  int padding = 0;
  bool bias = false;
  float eps = 1e-5f;
  float momentum = 0.1f;

  bool has_weight() const { return kind == LayerKind::conv || kind == LayerKind::linear; }
  bool operator==(const LayerSpec&) const = default;
};

/// Layer graph shared by the ANN and SNN interpretations. Every relu is a
/// spiking layer in the SNN; the final weight layer is the non-spiking
/// output accumulator.
struct NetworkSpec {
  Shape input_shape;  // per sample, e.g. {1,16,16} or {8}
  int classes = 0;
  std::vector<LayerSpec> layers;

  /// Throws ShapeError unless consecutive shapes compose and the graph ends
  /// in a linear layer producing `classes` logits.
  void validate() const;
  /// Per-sample output shape of every layer.
  std::vector<Shape> output_shapes() const;
  /// Per-sample input shape of layer `index`.
  Shape input_shape_of(int index) const;
  /// Layer indices of the relu (spiking) layers, in order.
  std::vector<int> spiking_layers() const;
  /// Layer indices of conv/linear layers, in order.
  std::vector<int> weight_layers() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// Compact architecture string, e.g.
/// "conv:8:3:1:1,bn,relu,pool:2,flatten,linear:10:bias".
NetworkSpec parse_architecture(std::string_view arch, Shape input_shape, int classes);
std::string architecture_string(const NetworkSpec& spec);

/// "layer03.weight" style parameter names.
std::string param_name(int layer, std::string_view what);
int layer_of(std::string_view param);
bool is_prunable(std::string_view param);

using ParamMap = std::map<std::string, Tensor>;

/// He-uniform conv/linear weights, zero biases, batch-norm scale 1 shift 0,
/// running mean 0 and variance 1.
ParamMap init_parameters(const NetworkSpec& spec, Rng& rng);

/// Per-layer binary mask over prunable weights.
struct LayerMask {
  Shape shape;
  std::vector<std::uint8_t> bits;  // one 0/1 byte per weight

  std::size_t size() const { return bits.size(); }
  std::size_t nnz() const;
  Tensor as_tensor() const;
  bool operator==(const LayerMask&) const = default;
};

enum class Granularity { uniform, nonuniform, global };
std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view s);

struct SparsityMask {
  std::map<std::string, LayerMask> layers;  // keyed by weight parameter name
  double kappa = 0.0;
  Granularity granularity = Granularity::uniform;

  std::size_t nnz() const;
  std::size_t total() const;
  double sparsity() const;
  bool operator==(const SparsityMask&) const = default;
};

/// Network, parameters and optional pruning/conversion state. A model with
/// threshold parameters is interpreted as an SNN.
struct Model {
  NetworkSpec spec;
  ParamMap params;
  std::optional<SparsityMask> mask;
  std::map<std::string, std::string> metadata;

  bool is_snn() const;
  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);
  /// Sets masked-out weights to exactly 0.0.
  void apply_mask();
};

/// Tape variables for the parameters read by a forward pass.
using Bindings = std::map<std::string, Var>;

/// Binds every non-buffer parameter; `trainable(name)` selects which ones
/// require gradients.
Bindings bind_parameters(Tape& tape, const ParamMap& params,
                         const std::function<bool(const std::string&)>& trainable);
Bindings bind_constants(Tape& tape, const ParamMap& params);
bool is_buffer(std::string_view param);

/// Observed train-mode batch statistics keyed by layer index.
using StatsLog = std::map<int, ops::BatchStats>;

struct ForwardOptions {
  bool train = false;
  /// Receives train-mode batch statistics when non-null.
  StatsLog* stats = nullptr;
  /// When >= 0, stop at the pre-activation entering that spiking layer.
  int stop_at_spiking = -1;
  /// When > 0, the batch is tiled into T time-major copies just before the
  /// first layer that is not conv/linear.
  int repeat_time = 0;
};

/// Maps (spiking index, layer index, pre-activation) to the activation.
using ActivationFn = std::function<Var(int spiking_index, int layer_index, Var pre)>;

/// Runs the layer graph on x[N, input_shape...].
Var run_layers(const NetworkSpec& spec, const ParamMap& params, const Bindings& vars, Var x,
               const ForwardOptions& opt, const ActivationFn& activation);

/// Folds logged batch statistics into running buffers with each layer's
/// momentum.
void update_running_stats(const NetworkSpec& spec, ParamMap& params, const StatsLog& log);

/// Number of prunable weights in the model.
std::size_t prunable_count(const NetworkSpec& spec);

}  // namespace rsnn

#endif  // RSNN_NETWORK_HPP_
