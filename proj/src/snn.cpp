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

#include "rsnn/snn.hpp"

#include <algorithm>

#include "rsnn/ops.hpp"

namespace rsnn {
namespace {

std::size_t step_size(const Tensor& current, int timesteps) {
  if (timesteps < 1 || current.ndim() < 1 || current.dim(0) % timesteps != 0) {
    throw ShapeError("spiking layer: leading axis " + shape_str(current.shape()) +
                     " not divisible by T=" + std::to_string(timesteps));
  }
  return current.size() / static_cast<std::size_t>(timesteps);
}

}  // namespace

LifResult lif_step(const Tensor& v_prev, const Tensor& current, float vth, float tau) {
  if (v_prev.shape() != current.shape()) throw ShapeError("lif_step: shape mismatch");
  LifResult r{Tensor(current.shape()), Tensor(current.shape())};
  for (std::size_t i = 0; i < current.size(); ++i) {
    const float vm = tau * v_prev[i] + current[i];
    const bool fire = vm >= vth;
    r.spikes[i] = fire ? 1.0f : 0.0f;
    r.v_next[i] = fire ? 0.0f : vm;
  }
  return r;
}

Tensor direct_encode(const Tensor& x, int timesteps) {
  if (timesteps < 1) throw std::invalid_argument("direct_encode needs T >= 1");
  Tape tape;
  return ops::repeat_time(tape.constant(x), timesteps).value();
}

Var lif_layer(Var current, Var vth, int timesteps, float tau, const SurrogateSpec& surrogate,
              Tensor* spikes_out) {
  if (surrogate.family == SurrogateFamily::conversion_approx) {
    throw std::invalid_argument("lif_layer: the conversion rule replaces the spiking layer");
  }
  surrogate.validate();
  const Tensor& in = current.value();
  const std::size_t step = step_size(in, timesteps);
  const float th = vth.value().item();
  Tensor spikes(in.shape());
  Tensor vminus(in.shape());
  std::vector<float> v(step, 0.0f);
  for (int t = 0; t < timesteps; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * step;
    for (std::size_t i = 0; i < step; ++i) {
      const float vm = tau * v[i] + in[off + i];
      const bool fire = vm >= th;
      vminus[off + i] = vm;
      spikes[off + i] = fire ? 1.0f : 0.0f;
      v[i] = fire ? 0.0f : vm;
    }
  }
  if (spikes_out) *spikes_out = spikes;
  Tape& tape = *current.tape;
  if (surrogate.family == SurrogateFamily::bptr) {
    return tape.record(std::move(spikes), {current, vth},
                       [current, vth, timesteps, th, step](Tape& tp, const Tensor& g) {
      const Tensor& I = tp.value(current);
      Tensor gi(I.shape());
      double gth = 0.0;
      const float inv_t = 1.0f / static_cast<float>(timesteps);
      for (std::size_t i = 0; i < step; ++i) {
        float m = 0.0f, go = 0.0f;
        for (int t = 0; t < timesteps; ++t) {
          m += I[static_cast<std::size_t>(t) * step + i];
          go += g[static_cast<std::size_t>(t) * step + i];
        }
        m *= inv_t;
        if (!(m > 0.0f && m < th)) continue;
        const float d = go * inv_t / th;
        for (int t = 0; t < timesteps; ++t) gi[static_cast<std::size_t>(t) * step + i] = d;
        gth -= static_cast<double>(go) * m / (static_cast<double>(th) * th);
      }
      if (tp.requires_grad(current)) tp.accumulate(current, gi);
      if (tp.requires_grad(vth)) tp.accumulate(vth, Tensor::scalar(static_cast<float>(gth)));
    });
  }
  return tape.record(std::move(spikes), {current, vth},
                     [current, vth, timesteps, tau, th, step, surrogate, vminus = std::move(vminus)](
                         Tape& tp, const Tensor& g) {
    Tensor gi(vminus.shape());
    std::vector<float> gv(step, 0.0f);
    double gth = 0.0;
    for (int t = timesteps - 1; t >= 0; --t) {
      const std::size_t off = static_cast<std::size_t>(t) * step;
      for (std::size_t i = 0; i < step; ++i) {
        const float vm = vminus[off + i];
        const float keep = vm >= th ? 0.0f : 1.0f;
        const float go = g[off + i];
        const float sg = go != 0.0f ? go * surrogate_grad(surrogate, vm, th) : 0.0f;
        const float gvm = sg + gv[i] * keep;
        gi[off + i] = gvm;
        gth -= sg;
        gv[i] = tau * gvm;
      }
    }
    if (tp.requires_grad(current)) tp.accumulate(current, gi);
    if (tp.requires_grad(vth)) tp.accumulate(vth, Tensor::scalar(static_cast<float>(gth)));
  });
}

Var relu_rate(Var current, Var vth) {
  const Tensor& in = current.value();
  const float th = vth.value().item();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0f ? in[i] / th : 0.0f;
  return current.tape->record(std::move(out), {current, vth}, [current, vth, th](Tape& tp, const Tensor& g) {
    const Tensor& I = tp.value(current);
    Tensor gi(I.shape());
    double gth = 0.0;
    for (std::size_t i = 0; i < I.size(); ++i) {
      if (I[i] > 0.0f) {
        gi[i] = g[i] / th;
        gth -= static_cast<double>(g[i]) * I[i] / (static_cast<double>(th) * th);
      }
    }
    if (tp.requires_grad(current)) tp.accumulate(current, gi);
    if (tp.requires_grad(vth)) tp.accumulate(vth, Tensor::scalar(static_cast<float>(gth)));
  });
}

std::string threshold_name(int layer) { return param_name(layer, "threshold"); }

Var snn_forward(const NetworkSpec& spec, const ParamMap& params, const Bindings& vars, Var x,
                const SnnOptions& opt, SpikeTrace* trace) {
  const int n = x.shape()[0];
  if (trace) {
    trace->timesteps = opt.timesteps;
    trace->batch = n;
    trace->layers.assign(spec.spiking_layers().size(), Tensor());
  }
  if (opt.timesteps == 0) return x.tape->constant(Tensor({n, spec.classes}));
  ForwardOptions fo;
  fo.train = opt.train;
  fo.stats = opt.stats;
  fo.stop_at_spiking = opt.stop_at_spiking;
  fo.repeat_time = opt.timesteps;
  const bool clone = opt.surrogate.family == SurrogateFamily::conversion_approx;
  auto activation = [&](int si, int li, Var pre) {
    auto it = vars.find(threshold_name(li));
    if (it == vars.end()) throw std::out_of_range("missing threshold for layer " + std::to_string(li));
    if (clone) return relu_rate(pre, it->second);
    Tensor* out = trace ? &trace->layers[static_cast<std::size_t>(si)] : nullptr;
    return lif_layer(pre, it->second, opt.timesteps, opt.tau, opt.surrogate, out);
  };
  Var out = run_layers(spec, params, vars, x, fo, activation);
  if (opt.stop_at_spiking >= 0) return out;
  return ops::sum_over_time(out, opt.timesteps);
}

Tensor snn_logits(const Model& model, const Tensor& x, int timesteps, float tau, int batch,
                  SpikeTrace* trace) {
  const int n = x.dim(0);
  Tensor out({n, model.spec.classes});
  SnnOptions opt;
  opt.timesteps = timesteps;
  opt.tau = tau;
  if (trace) {
    trace->timesteps = timesteps;
    trace->batch = n;
    trace->layers.clear();
  }
  for (int b = 0; b < n; b += batch) {
    const int e = std::min(n, b + batch);
    Tape tape;
    SpikeTrace part;
    const Bindings vars = bind_constants(tape, model.params);
    const Tensor logits =
        snn_forward(model.spec, model.params, vars, tape.constant(x.slice_rows(b, e)), opt, trace ? &part : nullptr)
            .value();
    std::copy(logits.ptr(), logits.ptr() + logits.size(), out.ptr() + static_cast<std::size_t>(b) * model.spec.classes);
    if (trace) {
      // Re-lay each chunk's [T*n_b,...] spikes into the full time-major batch.
      if (trace->layers.empty()) {
        for (const Tensor& l : part.layers) {
          Shape s = l.shape();
          if (!s.empty()) s[0] = timesteps * n;
          trace->layers.emplace_back(s);
        }
      }
      for (std::size_t l = 0; l < part.layers.size(); ++l) {
        const Tensor& src = part.layers[l];
        if (src.empty()) continue;
        const std::size_t per = src.size() / static_cast<std::size_t>(timesteps * (e - b));
        for (int t = 0; t < timesteps; ++t) {
          std::copy(src.ptr() + static_cast<std::size_t>(t) * (e - b) * per,
                    src.ptr() + static_cast<std::size_t>(t + 1) * (e - b) * per,
                    trace->layers[l].ptr() + (static_cast<std::size_t>(t) * n + b) * per);
        }
      }
    }
  }
  return out;
}

Classifier snn_classifier(const Model& model, int timesteps, float tau, const SurrogateSpec& surrogate) {
  surrogate.validate();
  const Model* m = &model;
  Classifier c;
  c.logits = [m, timesteps, tau, surrogate](Tape& tape, Var x) {
    SnnOptions opt;
    opt.timesteps = timesteps;
    opt.tau = tau;
    opt.surrogate = surrogate;
    return snn_forward(m->spec, m->params, bind_constants(tape, m->params), x, opt);
  };
  c.predict_logits = [m, timesteps, tau](const Tensor& x) { return snn_logits(*m, x, timesteps, tau); };
  return c;
}

std::vector<float> thresholds(const Model& model) {
  std::vector<float> out;
  for (int idx : model.spec.spiking_layers()) out.push_back(model.param(threshold_name(idx)).item());
  return out;
}

}  // namespace rsnn
