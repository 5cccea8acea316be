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

#include "rsnn/network.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace rsnn {
namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    std::string piece(s.substr(start, pos == std::string_view::npos ? s.size() - start : pos - start));
    // trim
    const auto b = piece.find_first_not_of(" \t");
    const auto e = piece.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : piece.substr(b, e - b + 1));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(const std::string& s, std::string_view context) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad integer '" + s + "' in layer '" + std::string(context) + "'");
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::linear: return "linear";
    case LayerKind::batchnorm: return "bn";
    case LayerKind::relu: return "relu";
    case LayerKind::avgpool: return "pool";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

std::vector<Shape> NetworkSpec::output_shapes() const {
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3) throw ShapeError(where + " needs [C,H,W] input, got " + shape_str(cur));
        if (l.out < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0) {
          throw ShapeError(where + " has invalid hyperparameters");
        }
        const int sh = cur[1] + 2 * l.padding - l.kernel;
        const int sw = cur[2] + 2 * l.padding - l.kernel;
        if (sh < 0 || sw < 0 || sh % l.stride || sw % l.stride) {
          throw ShapeError(where + " output size is not integral for input " + shape_str(cur));
        }
        cur = {l.out, sh / l.stride + 1, sw / l.stride + 1};
        break;
      }
      case LayerKind::linear:
        if (cur.size() != 1) throw ShapeError(where + " needs flat input, got " + shape_str(cur));
        if (l.out < 1) throw ShapeError(where + " needs a positive width");
        cur = {l.out};
        break;
      case LayerKind::batchnorm:
      case LayerKind::relu:
        if (cur.empty()) throw ShapeError(where + " on empty shape");
        break;
      case LayerKind::avgpool:
        if (cur.size() != 3 || l.kernel < 1 || cur[1] % l.kernel || cur[2] % l.kernel) {
          throw ShapeError(where + " window does not tile input " + shape_str(cur));
        }
        cur = {cur[0], cur[1] / l.kernel, cur[2] / l.kernel};
        break;
      case LayerKind::flatten:
        cur = {static_cast<int>(numel(cur))};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void NetworkSpec::validate() const {
  if (input_shape.empty()) throw ShapeError("network input shape is empty");
  if (classes < 1) throw ShapeError("network needs at least one class");
  if (layers.empty()) throw ShapeError("network has no layers");
  const std::vector<Shape> shapes = output_shapes();
  const std::vector<int> weights = weight_layers();
  if (weights.empty() || layers[static_cast<std::size_t>(weights.back())].kind != LayerKind::linear) {
    throw ShapeError("network must end with a linear output layer");
  }
  for (std::size_t i = static_cast<std::size_t>(weights.back()) + 1; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::relu) throw ShapeError("no activation allowed after the output layer");
  }
  if (shapes.back() != Shape{classes}) {
    throw ShapeError("network output " + shape_str(shapes.back()) + " does not match " +
                     std::to_string(classes) + " classes");
  }
}

Shape NetworkSpec::input_shape_of(int index) const {
  if (index == 0) return input_shape;
  return output_shapes().at(static_cast<std::size_t>(index - 1));
}

std::vector<int> NetworkSpec::spiking_layers() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::relu) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> NetworkSpec::weight_layers() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].has_weight()) out.push_back(static_cast<int>(i));
  }
  return out;
}

NetworkSpec parse_architecture(std::string_view arch, Shape input_shape, int classes) {
  NetworkSpec spec;
  spec.input_shape = std::move(input_shape);
  spec.classes = classes;
  for (const std::string& token : split(arch, ',')) {
    if (token.empty()) continue;
    std::vector<std::string> f = split(token, ':');
    LayerSpec l;
    bool bias = false;
    if (!f.empty() && f.back() == "bias") {
      bias = true;
      f.pop_back();
    }
    const std::string& kind = f[0];
    if (kind == "conv") {
      if (f.size() < 3 || f.size() > 5) throw std::invalid_argument("conv needs conv:F:k[:stride[:pad]], got '" + token + "'");
      l.kind = LayerKind::conv;
      l.out = parse_int(f[1], token);
      l.kernel = parse_int(f[2], token);
      if (f.size() > 3) l.stride = parse_int(f[3], token);
      if (f.size() > 4) l.padding = parse_int(f[4], token);
      l.bias = bias;
    } else if (kind == "linear") {
      if (f.size() != 2) throw std::invalid_argument("linear needs linear:F, got '" + token + "'");
      l.kind = LayerKind::linear;
      l.out = parse_int(f[1], token);
      l.bias = bias;
    } else if (kind == "bn" && f.size() == 1) {
      l.kind = LayerKind::batchnorm;
    } else if (kind == "relu" && f.size() == 1) {
      l.kind = LayerKind::relu;
    } else if (kind == "pool" && f.size() == 2) {
      l.kind = LayerKind::avgpool;
      l.kernel = parse_int(f[1], token);
    } else if (kind == "flatten" && f.size() == 1) {
      l.kind = LayerKind::flatten;
    } else {
      throw std::invalid_argument("unknown layer '" + token + "'");
    }
    if (bias && !l.has_weight()) throw std::invalid_argument("bias flag on layer '" + token + "'");
    spec.layers.push_back(l);
  }
  spec.validate();
  return spec;
}

std::string architecture_string(const NetworkSpec& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (i) os << ',';
    os << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::conv:
        os << ':' << l.out << ':' << l.kernel << ':' << l.stride << ':' << l.padding;
        break;
      case LayerKind::linear: os << ':' << l.out; break;
      case LayerKind::avgpool: os << ':' << l.kernel; break;
      default: break;
    }
    if (l.bias) os << ":bias";
  }
  return os.str();
}

std::string param_name(int layer, std::string_view what) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "layer%02d.", layer);
  return std::string(buf) + std::string(what);
}

int layer_of(std::string_view param) {
  if (param.size() < 8 || param.substr(0, 5) != "layer") {
    throw std::invalid_argument("not a layer parameter: " + std::string(param));
  }
  const std::size_t dot = param.find('.');
  return std::stoi(std::string(param.substr(5, dot - 5)));
}

bool is_prunable(std::string_view param) {
  constexpr std::string_view suffix = ".weight";
  return param.size() > suffix.size() && param.substr(param.size() - suffix.size()) == suffix;
}

bool is_buffer(std::string_view param) {
  return param.ends_with(".running_mean") || param.ends_with(".running_var");
}

ParamMap init_parameters(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  ParamMap params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const int idx = static_cast<int>(i);
    const Shape in = spec.input_shape_of(idx);
    switch (l.kind) {
      case LayerKind::conv: {
        const int fan_in = in[0] * l.kernel * l.kernel;
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
        params[param_name(idx, "weight")] = rng.uniform_tensor({l.out, in[0], l.kernel, l.kernel}, -bound, bound);
        if (l.bias) params[param_name(idx, "bias")] = Tensor({l.out});
        break;
      }
      case LayerKind::linear: {
        const float bound = std::sqrt(6.0f / static_cast<float>(in[0]));
        params[param_name(idx, "weight")] = rng.uniform_tensor({l.out, in[0]}, -bound, bound);
        if (l.bias) params[param_name(idx, "bias")] = Tensor({l.out});
        break;
      }
      case LayerKind::batchnorm: {
        const int c = in[0];
        params[param_name(idx, "scale")] = Tensor::ones({c});
        params[param_name(idx, "shift")] = Tensor({c});
        params[param_name(idx, "running_mean")] = Tensor({c});
        params[param_name(idx, "running_var")] = Tensor::ones({c});
        break;
      }
      default: break;
    }
  }
  return params;
}

std::size_t LayerMask::nnz() const {
  std::size_t n = 0;
  for (std::uint8_t b : bits) n += b ? 1 : 0;
  return n;
}

Tensor LayerMask::as_tensor() const {
  Tensor t(shape);
  for (std::size_t i = 0; i < bits.size(); ++i) t[i] = bits[i] ? 1.0f : 0.0f;
  return t;
}

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::uniform: return "uniform";
    case Granularity::nonuniform: return "nonuniform";
    case Granularity::global: return "global";
  }
  return "?";
}

Granularity parse_granularity(std::string_view s) {
  if (s == "uniform") return Granularity::uniform;
  if (s == "nonuniform") return Granularity::nonuniform;
  if (s == "global") return Granularity::global;
  throw std::invalid_argument("unknown mask granularity '" + std::string(s) + "'");
}

std::size_t SparsityMask::nnz() const {
  std::size_t n = 0;
  for (const auto& [name, m] : layers) n += m.nnz();
  return n;
}

std::size_t SparsityMask::total() const {
  std::size_t n = 0;
  for (const auto& [name, m] : layers) n += m.size();
  return n;
}

double SparsityMask::sparsity() const {
  const std::size_t n = total();
  return n ? 1.0 - static_cast<double>(nnz()) / static_cast<double>(n) : 0.0;
}

bool Model::is_snn() const {
  for (const auto& [name, t] : params) {
    if (name.ends_with(".threshold")) return true;
  }
  return false;
}

const Tensor& Model::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("missing parameter " + name);
  return it->second;
}

Tensor& Model::param(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("missing parameter " + name);
  return it->second;
}

void Model::apply_mask() {
  if (!mask) return;
  for (const auto& [name, m] : mask->layers) {
    Tensor& w = param(name);
    if (w.shape() != m.shape) throw ShapeError("mask shape mismatch for " + name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!m.bits[i]) w[i] = 0.0f;
    }
  }
}

Bindings bind_parameters(Tape& tape, const ParamMap& params,
                         const std::function<bool(const std::string&)>& trainable) {
  Bindings b;
  for (const auto& [name, t] : params) {
    if (is_buffer(name)) continue;
    b[name] = tape.leaf(t, trainable && trainable(name));
  }
  return b;
}

Bindings bind_constants(Tape& tape, const ParamMap& params) {
  return bind_parameters(tape, params, nullptr);
}

Var run_layers(const NetworkSpec& spec, const ParamMap& params, const Bindings& vars, Var x,
               const ForwardOptions& opt, const ActivationFn& activation) {
  Var cur = x;
  int spiking = 0;
  bool tiled = false;
  auto var = [&](int layer, std::string_view what) -> Var {
    auto it = vars.find(param_name(layer, what));
    if (it == vars.end()) throw std::out_of_range("unbound parameter " + param_name(layer, what));
    return it->second;
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const int idx = static_cast<int>(i);
    if (!tiled && opt.repeat_time > 0 && !l.has_weight()) {
      cur = ops::repeat_time(cur, opt.repeat_time);
      tiled = true;
    }
    switch (l.kind) {
      case LayerKind::conv:
        cur = ops::conv2d(cur, var(idx, "weight"),
                          l.bias ? std::optional<Var>(var(idx, "bias")) : std::nullopt, l.stride,
                          l.padding);
        break;
      case LayerKind::linear:
        cur = ops::linear(cur, var(idx, "weight"),
                          l.bias ? std::optional<Var>(var(idx, "bias")) : std::nullopt);
        break;
      case LayerKind::batchnorm: {
        ops::BatchStats* stats = (opt.train && opt.stats) ? &(*opt.stats)[idx] : nullptr;
        cur = ops::batch_norm(cur, var(idx, "scale"), var(idx, "shift"),
                              params.at(param_name(idx, "running_mean")),
                              params.at(param_name(idx, "running_var")),
                              ops::BatchNormOptions{l.eps, opt.train}, stats);
        break;
      }
      case LayerKind::relu:
        if (spiking == opt.stop_at_spiking) return cur;
        cur = activation(spiking, idx, cur);
        ++spiking;
        break;
      case LayerKind::avgpool:
        cur = ops::avgpool2d(cur, l.kernel);
        break;
      case LayerKind::flatten: {
        const int n = cur.shape()[0];
        cur = ops::reshape(cur, {n, static_cast<int>(cur.value().size() / static_cast<std::size_t>(n))});
        break;
      }
    }
  }
  if (!tiled && opt.repeat_time > 0) cur = ops::repeat_time(cur, opt.repeat_time);
  if (opt.stop_at_spiking >= 0) {
    throw std::out_of_range("network has no spiking layer " + std::to_string(opt.stop_at_spiking));
  }
  return cur;
}

void update_running_stats(const NetworkSpec& spec, ParamMap& params, const StatsLog& log) {
  for (const auto& [idx, stats] : log) {
    const LayerSpec& l = spec.layers.at(static_cast<std::size_t>(idx));
    Tensor& rm = params.at(param_name(idx, "running_mean"));
    Tensor& rv = params.at(param_name(idx, "running_var"));
    const double m = l.momentum;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = static_cast<float>((1.0 - m) * rm[c] + m * stats.mean[c]);
      rv[c] = static_cast<float>((1.0 - m) * rv[c] + m * stats.unbiased_var[c]);
    }
  }
}

std::size_t prunable_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (int idx : spec.weight_layers()) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(idx)];
    const Shape in = spec.input_shape_of(idx);
    n += l.kind == LayerKind::conv
             ? static_cast<std::size_t>(l.out) * in[0] * l.kernel * l.kernel
             : static_cast<std::size_t>(l.out) * in[0];
  }
  return n;
}

}  // namespace rsnn
