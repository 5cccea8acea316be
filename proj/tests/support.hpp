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

#ifndef RSNN_TESTS_SUPPORT_HPP_
#define RSNN_TESTS_SUPPORT_HPP_

// Independent reference implementations and small fixtures shared by the
// unit suites and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "rsnn/ann.hpp"
#include "rsnn/dataset.hpp"
#include "rsnn/network.hpp"
#include "rsnn/ops.hpp"
#include "rsnn/pruning.hpp"
#include "rsnn/snn.hpp"
#include "rsnn/tape.hpp"

namespace rsnn::testing {

using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// ||analytic - numeric|| / max(||analytic||, ||numeric||) for the scalar
// sum(R * f(inputs)) with a fixed random projection R.
inline double grad_rel_error(const GraphFn& f, std::vector<Tensor> inputs, double h = 5e-3,
                             std::uint64_t seed = 7) {
  Tensor proj;
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t, true));
    Var out = f(tape, vars);
    Rng rng(seed, 1);
    proj = rng.uniform_tensor(out.shape(), -1.0f, 1.0f);
    tape.backward(out, proj);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& in) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : in) vars.push_back(tape.leaf(t, false));
    const Tensor& out = f(tape, vars).value();
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(proj[i]) * out[i];
    return s;
  };
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const float x0 = inputs[k][i];
      inputs[k][i] = static_cast<float>(x0 + h);
      const double up = eval(inputs);
      inputs[k][i] = static_cast<float>(x0 - h);
      const double dn = eval(inputs);
      inputs[k][i] = x0;
      const double num = (up - dn) / (2.0 * h);
      const double a = analytic[k][i];
      diff += (a - num) * (a - num);
      na += a * a;
      nn += num * num;
    }
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
  return std::sqrt(diff) / scale;
}

// C = A B with a plain triple loop in double.
inline Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * b[p * n + j];
      c[static_cast<std::size_t>(i) * n + j] = static_cast<float>(s);
    }
  }
  return c;
}

// Sliding-window cross-correlation with zero padding, in double.
inline Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int f = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, f, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < f; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
          for (int ch = 0; ch < c; ++ch)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                s += static_cast<double>(x[((static_cast<std::size_t>(b) * c + ch) * h + yy) * wd + xx]) *
                     w[((static_cast<std::size_t>(o) * c + ch) * k + u) * k + v];
              }
          y[((static_cast<std::size_t>(b) * f + o) * oh + i) * ow + j] = static_cast<float>(s);
        }
  return y;
}

// Keep-set of the top `keep` scores by a full stable sort (score desc, index asc).
inline std::vector<std::uint8_t> topk_oracle(const std::vector<float>& s, std::size_t keep) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  std::vector<std::uint8_t> bits(s.size(), 0);
  for (std::size_t i = 0; i < keep && i < idx.size(); ++i) bits[idx[i]] = 1;
  return bits;
}

// Order statistic: sorted value at rank ceil(rho/100 * n), 1-based.
inline float percentile_oracle(std::vector<float> v, double rho) {
  std::sort(v.begin(), v.end());
  const double r = rho / 100.0 * static_cast<double>(v.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(r - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

// Per-neuron fanout by enumerating every synapse of the next weight layer and
// mapping its input coordinate back through any pooling windows.
inline std::vector<double> fanout_oracle(const NetworkSpec& spec, const ParamMap& params, int spiking_index,
                                         const SparsityMask* mask = nullptr) {
  const int li = spec.spiking_layers()[static_cast<std::size_t>(spiking_index)];
  const Shape src = spec.output_shapes()[static_cast<std::size_t>(li)];
  std::vector<int> pools;
  int next = li + 1;
  while (!spec.layers[static_cast<std::size_t>(next)].has_weight()) {
    if (spec.layers[static_cast<std::size_t>(next)].kind == LayerKind::avgpool) pools.push_back(next);
    ++next;
  }
  const LayerSpec& L = spec.layers[static_cast<std::size_t>(next)];
  const std::string wname = param_name(next, "weight");
  const Tensor& w = params.at(wname);
  const LayerMask* m = nullptr;
  if (mask && mask->layers.count(wname)) m = &mask->layers.at(wname);
  auto live = [&](std::size_t flat) { return w[flat] != 0.0f && (!m || m->bits[flat]); };
  // flat index of the next layer's input -> count of live synapses reading it
  const Shape in = spec.input_shape_of(next);
  std::vector<double> reads(numel(in), 0.0);
  if (L.kind == LayerKind::linear) {
    const int out = w.dim(0), fan = w.dim(1);
    for (int o = 0; o < out; ++o)
      for (int i = 0; i < fan; ++i)
        if (live(static_cast<std::size_t>(o) * fan + i)) reads[static_cast<std::size_t>(i)] += 1.0;
  } else {
    const int c = in[0], h = in[1], wd = in[2], k = L.kernel;
    const int oh = (h + 2 * L.padding - k) / L.stride + 1, ow = (wd + 2 * L.padding - k) / L.stride + 1;
    for (int f = 0; f < L.out; ++f)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
          for (int ch = 0; ch < c; ++ch)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * L.stride - L.padding + u, xx = j * L.stride - L.padding + v;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                if (live(((static_cast<std::size_t>(f) * c + ch) * k + u) * k + v))
                  reads[(static_cast<std::size_t>(ch) * h + yy) * wd + xx] += 1.0;
              }
  }
  // walk the source neurons through the pools to the reading coordinate
  std::vector<double> psi(numel(src), 0.0);
  const int c = src.size() == 3 ? src[0] : 1;
  const int h = src.size() == 3 ? src[1] : 1;
  const int wd = src.size() == 3 ? src[2] : static_cast<int>(numel(src));
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < wd; ++x) {
        int py = y, px = x, ph = h, pw = wd;
        bool dropped = false;
        for (int p : pools) {
          const int k = spec.layers[static_cast<std::size_t>(p)].kernel;
          py /= k;
          px /= k;
          ph /= k;
          pw /= k;
          if (py >= ph || px >= pw) dropped = true;
        }
        const std::size_t s = (static_cast<std::size_t>(ch) * h + y) * wd + x;
        if (!dropped) psi[s] = reads[(static_cast<std::size_t>(ch) * ph + py) * pw + px];
      }
  return psi;
}

// E = e_ac / N * sum over samples, timesteps, layers, neurons of psi * o.
inline double energy_oracle(const SpikeTrace& trace, const std::vector<std::vector<double>>& psi, double e_ac) {
  double e = 0.0;
  for (int b = 0; b < trace.batch; ++b)
    for (int t = 0; t < trace.timesteps; ++t)
      for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        const std::size_t per = psi[l].size();
        for (std::size_t i = 0; i < per; ++i) {
          const std::size_t flat = (static_cast<std::size_t>(t) * trace.batch + b) * per + i;
          e += psi[l][i] * trace.layers[l][flat];
        }
      }
  return e_ac * e / trace.batch;
}

inline Model make_model(const std::string& arch, Shape input, int classes, std::uint64_t seed) {
  Model m;
  m.spec = parse_architecture(arch, std::move(input), classes);
  Rng rng(seed, 3);
  m.params = init_parameters(m.spec, rng);
  m.metadata["kind"] = "ann";
  return m;
}

inline constexpr const char* kTinyConv = "conv:4:3:1:1,bn,relu,pool:2,conv:6:3:1:1,bn,relu,pool:2,flatten,linear:12,bn,relu,linear:10:bias";
inline constexpr const char* kTinyMlp = "linear:16,bn,relu,linear:12,relu,linear:3:bias";

// Random classifier with nonzero running statistics so eval-mode batch-norm
// is not the identity.
inline Model tiny_conv(std::uint64_t seed) {
  Model m = make_model(kTinyConv, {1, 8, 8}, 10, seed);
  Rng rng(seed, 9);
  for (auto& [name, t] : m.params) {
    if (name.ends_with("running_mean")) t = rng.uniform_tensor(t.shape(), -0.1f, 0.1f);
    if (name.ends_with("running_var")) t = rng.uniform_tensor(t.shape(), 0.5f, 1.5f);
  }
  return m;
}

// tiny_conv with fixed thresholds: a converted-looking SNN without calibration.
inline Model tiny_snn(std::uint64_t seed, float vth = 0.5f) {
  Model m = tiny_conv(seed);
  for (int l : m.spec.spiking_layers()) m.params[threshold_name(l)] = Tensor::scalar(vth);
  m.metadata["kind"] = "snn";
  m.metadata["timesteps"] = "4";
  m.metadata["tau"] = "1";
  return m;
}

inline Dataset random_images(std::uint64_t seed, int n, Shape sample, int classes) {
  Rng rng(seed, 11);
  Shape s = sample;
  s.insert(s.begin(), n);
  Dataset d;
  d.images = rng.uniform_tensor(s, 0.0f, 1.0f);
  d.classes = classes;
  for (int i = 0; i < n; ++i) d.labels.push_back(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes))));
  return d;
}

}  // namespace rsnn::testing

#endif  // RSNN_TESTS_SUPPORT_HPP_
