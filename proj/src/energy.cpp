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

#include "rsnn/energy.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace rsnn {
namespace {

bool kept(const Tensor& w, const LayerMask* m, std::size_t i) { return w[i] != 0.0f && (!m || m->bits[i]); }

// Fanout of each input neuron of weight layer `idx`, per-sample input shape.
Tensor weight_layer_fanout(const NetworkSpec& spec, const ParamMap& params, int idx, const LayerMask* m) {
  const LayerSpec& l = spec.layers.at(static_cast<std::size_t>(idx));
  const Shape in = spec.input_shape_of(idx);
  const Tensor& w = params.at(param_name(idx, "weight"));
  Tensor psi(in);
  if (l.kind == LayerKind::linear) {
    const int out = w.dim(0), fan = w.dim(1);
    for (int o = 0; o < out; ++o) {
      for (int j = 0; j < fan; ++j) {
        if (kept(w, m, static_cast<std::size_t>(o) * fan + j)) psi[static_cast<std::size_t>(j)] += 1.0f;
      }
    }
    return psi;
  }
  const int f = w.dim(0), c = w.dim(1), k = l.kernel, s = l.stride, p = l.padding;
  const int h = in[1], wd = in[2];
  const int ho = (h + 2 * p - k) / s + 1, wo = (wd + 2 * p - k) / s + 1;
  std::vector<int> nz(static_cast<std::size_t>(c) * k * k, 0);
  for (int fi = 0; fi < f; ++fi) {
    for (int ci = 0; ci < c; ++ci) {
      for (int t = 0; t < k * k; ++t) {
        const std::size_t i = (static_cast<std::size_t>(fi) * c + ci) * k * k + t;
        if (kept(w, m, i)) ++nz[static_cast<std::size_t>(ci) * k * k + t];
      }
    }
  }
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        int count = 0;
        for (int ky = 0; ky < k; ++ky) {
          const int ny = y + p - ky;
          if (ny < 0 || ny % s || ny / s >= ho) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int nx = x + p - kx;
            if (nx < 0 || nx % s || nx / s >= wo) continue;
            count += nz[(static_cast<std::size_t>(ci) * k + ky) * k + kx];
          }
        }
        psi[(static_cast<std::size_t>(ci) * h + y) * wd + x] = static_cast<float>(count);
      }
    }
  }
  return psi;
}

}  // namespace

Tensor active_fanout(const NetworkSpec& spec, const ParamMap& params, int spiking_index, const SparsityMask* mask) {
  const std::vector<int> spiking = spec.spiking_layers();
  const int li = spiking.at(static_cast<std::size_t>(spiking_index));
  std::vector<int> pools;
  int next = -1;
  for (std::size_t j = static_cast<std::size_t>(li) + 1; j < spec.layers.size(); ++j) {
    const LayerSpec& l = spec.layers[j];
    if (l.has_weight()) {
      next = static_cast<int>(j);
      break;
    }
    if (l.kind == LayerKind::avgpool) {
      pools.push_back(static_cast<int>(j));
    } else if (l.kind != LayerKind::flatten) {
      throw std::invalid_argument("energy model: unsupported " + std::string(to_string(l.kind)) +
                                  " between a spiking layer and the next weight layer");
    }
  }
  if (next < 0) throw std::invalid_argument("spiking layer without a following weight layer");
  const LayerMask* m = nullptr;
  if (mask) {
    auto it = mask->layers.find(param_name(next, "weight"));
    if (it != mask->layers.end()) m = &it->second;
  }
  Tensor psi = weight_layer_fanout(spec, params, next, m);
  for (auto it = pools.rbegin(); it != pools.rend(); ++it) {
    const Shape in = spec.input_shape_of(*it);
    const int k = spec.layers[static_cast<std::size_t>(*it)].kernel;
    const int ho = in[1] / k, wo = in[2] / k;
    const Tensor pooled = psi.reshaped({in[0], ho, wo});
    Tensor up(in);
    for (int c = 0; c < in[0]; ++c) {
      for (int y = 0; y < in[1]; ++y) {
        for (int x = 0; x < in[2]; ++x) {
          const int py = y / k, px = x / k;
          up[(static_cast<std::size_t>(c) * in[1] + y) * in[2] + x] =
              py < ho && px < wo ? pooled[(static_cast<std::size_t>(c) * ho + py) * wo + px] : 0.0f;
        }
      }
    }
    psi = std::move(up);
  }
  return psi.reshaped(spec.output_shapes()[static_cast<std::size_t>(li)]);
}

std::vector<Tensor> active_fanouts(const NetworkSpec& spec, const ParamMap& params, const SparsityMask* mask) {
  std::vector<Tensor> out;
  const std::size_t n = spec.spiking_layers().size();
  for (std::size_t i = 0; i < n; ++i) out.push_back(active_fanout(spec, params, static_cast<int>(i), mask));
  return out;
}

SpikeStats spike_stats(const SpikeTrace& trace) {
  SpikeStats s;
  double neurons = 0.0;
  for (const Tensor& l : trace.layers) {
    double total = 0.0;
    for (float v : l.data()) total += v;
    const double cells = static_cast<double>(l.size());
    s.totals.push_back(total);
    s.rates.push_back(cells > 0 ? total / cells : 0.0);
    s.total += total;
    neurons += cells;
  }
  s.ratio = neurons > 0 ? s.total / neurons : 0.0;
  return s;
}

EnergyReport estimate_energy(const SpikeTrace& trace, const std::vector<Tensor>& fanouts, double e_ac,
                             const std::vector<int>& layer_ids) {
  if (trace.layers.size() != fanouts.size()) {
    throw std::invalid_argument("energy: trace has " + std::to_string(trace.layers.size()) + " layers but " +
                                std::to_string(fanouts.size()) + " fanout maps were given");
  }
  EnergyReport r;
  r.timesteps = trace.timesteps;
  r.samples = static_cast<std::size_t>(trace.batch);
  r.e_ac = e_ac;
  const double n = trace.batch > 0 ? static_cast<double>(trace.batch) : 1.0;
  double neurons = 0.0, terms = 0.0;
  for (std::size_t l = 0; l < fanouts.size(); ++l) {
    const Tensor& o = trace.layers[l];
    const Tensor& psi = fanouts[l];
    const std::size_t per = psi.size();
    if (per == 0 || o.size() != per * static_cast<std::size_t>(trace.timesteps) * static_cast<std::size_t>(trace.batch)) {
      throw std::invalid_argument("energy: fanout/trace mismatch at spiking layer " + std::to_string(l));
    }
    LayerEnergy le;
    le.layer = l < layer_ids.size() ? layer_ids[l] : static_cast<int>(l);
    le.neurons = per;
    double spikes = 0.0, term = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (o[i] != 0.0f) {
        spikes += o[i];
        term += static_cast<double>(psi[i % per]) * o[i];
      }
    }
    le.spikes = spikes / n;
    le.term = term / n;
    le.rate = trace.timesteps > 0 ? le.spikes / (static_cast<double>(per) * trace.timesteps) : 0.0;
    r.total_spikes += le.spikes;
    terms += term;
    neurons += static_cast<double>(per);
    r.layers.push_back(le);
  }
  r.energy = e_ac * terms / n;
  r.coding_ratio = neurons > 0 && trace.timesteps > 0 ? r.total_spikes / (neurons * trace.timesteps) : 0.0;
  return r;
}

EnergyReport measure_energy(const Model& snn, const Dataset& data, std::size_t cap, int timesteps, float tau,
                            double e_ac) {
  const Dataset sub = cap ? data.head(cap) : data;
  const std::vector<Tensor> psi = active_fanouts(snn.spec, snn.params, snn.mask ? &*snn.mask : nullptr);
  const std::vector<int> ids = snn.spec.spiking_layers();
  EnergyReport total;
  total.timesteps = timesteps;
  total.e_ac = e_ac;
  const int n = static_cast<int>(sub.size());
  constexpr int kBatch = 100;
  double weight_sum = 0.0;
  for (int b = 0; b < n; b += kBatch) {
    const int e = std::min(n, b + kBatch);
    SpikeTrace trace;
    snn_logits(snn, sub.images.slice_rows(b, e), timesteps, tau, kBatch, &trace);
    const EnergyReport part = estimate_energy(trace, psi, e_ac, ids);
    const double w = e - b;
    if (total.layers.empty()) {
      total.layers = part.layers;
      for (auto& l : total.layers) l.spikes = l.rate = l.term = 0.0;
    }
    for (std::size_t l = 0; l < part.layers.size(); ++l) {
      total.layers[l].spikes += part.layers[l].spikes * w;
      total.layers[l].term += part.layers[l].term * w;
      total.layers[l].rate += part.layers[l].rate * w;
    }
    total.total_spikes += part.total_spikes * w;
    total.energy += part.energy * w;
    total.coding_ratio += part.coding_ratio * w;
    weight_sum += w;
  }
  if (weight_sum > 0) {
    for (auto& l : total.layers) {
      l.spikes /= weight_sum;
      l.term /= weight_sum;
      l.rate /= weight_sum;
    }
    total.total_spikes /= weight_sum;
    total.energy /= weight_sum;
    total.coding_ratio /= weight_sum;
  }
  total.samples = static_cast<std::size_t>(n);
  return total;
}

void compare_to(EnergyReport& report, const EnergyReport& ref, const std::string& ref_name) {
  report.reference = ref_name;
  report.spike_ratio = report.total_spikes > 0 ? ref.total_spikes / report.total_spikes : 0.0;
  report.energy_ratio = report.energy > 0 ? ref.energy / report.energy : 0.0;
}

std::string EnergyReport::to_json() const {
  nlohmann::json j;
  j["timesteps"] = timesteps;
  j["samples"] = samples;
  j["e_ac"] = e_ac;
  j["spikes"] = total_spikes;
  j["energy"] = energy;
  j["coding_ratio"] = coding_ratio;
  j["reference"] = reference;
  j["spike_ratio"] = spike_ratio;
  j["energy_ratio"] = energy_ratio;
  j["layers"] = nlohmann::json::array();
  for (const LayerEnergy& l : layers) {
    j["layers"].push_back({{"layer", l.layer}, {"neurons", l.neurons}, {"spikes", l.spikes}, {"rate", l.rate},
                           {"term", l.term}});
  }
  return j.dump(2);
}

void EnergyReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json() << '\n';
}

void EnergyReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "layer,neurons,spikes,rate,term\n";
  char line[160];
  for (const LayerEnergy& l : layers) {
    std::snprintf(line, sizeof(line), "%d,%zu,%.6f,%.6f,%.6f\n", l.layer, l.neurons, l.spikes, l.rate, l.term);
    out << line;
  }
}

}  // namespace rsnn
