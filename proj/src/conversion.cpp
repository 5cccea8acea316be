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

#include "rsnn/conversion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rsnn {

void ConversionConfig::validate() const {
  if (timesteps < 1) throw std::invalid_argument("conversion timesteps must be >= 1");
  if (calib_timesteps < timesteps) throw std::invalid_argument("calibration timesteps must be >= T");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw std::invalid_argument("percentile must lie in (0,100]");
  if (!(lambda > 0.0f && lambda <= 1.0f)) throw std::invalid_argument("threshold scale must lie in (0,1]");
  if (batches < 1 || batch_size < 1) throw std::invalid_argument("calibration needs at least one non-empty batch");
}

Model transfer_weights(const Model& ann) {
  if (ann.is_snn()) throw ConversionError("model already carries thresholds");
  ann.spec.validate();
  Model snn = ann;
  for (int idx : snn.spec.spiking_layers()) snn.params[threshold_name(idx)] = Tensor::scalar(0.0f);
  for (auto& [name, t] : snn.params) {
    if (name.ends_with(".running_mean")) t.fill(0.0f);
    if (name.ends_with(".running_var")) t.fill(1.0f);
  }
  snn.metadata["kind"] = "snn";
  return snn;
}

float nearest_rank_percentile(std::vector<float> values, double rho) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(rho > 0.0 && rho <= 100.0)) throw std::invalid_argument("percentile must lie in (0,100]");
  const double pos = std::ceil(rho / 100.0 * static_cast<double>(values.size()) - 1e-9);
  const std::size_t rank = std::clamp<std::size_t>(static_cast<std::size_t>(pos), 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

std::vector<std::vector<std::size_t>> calibration_batches(const Dataset& data, const ConversionConfig& cfg) {
  Rng rng(cfg.seed, 0x63616c);
  const std::vector<std::size_t> order = rng.permutation(data.size());
  std::vector<std::vector<std::size_t>> out;
  std::size_t pos = 0;
  for (int b = 0; b < cfg.batches && pos < order.size(); ++b) {
    const std::size_t e = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(e));
    pos = e;
  }
  if (out.empty()) throw ConversionError("no calibration data");
  return out;
}

std::vector<float> calibrate_thresholds(Model& snn, const Dataset& data,
                                        const std::vector<std::vector<std::size_t>>& batches,
                                        const ConversionConfig& cfg, CalibrationLog* log) {
  const std::vector<int> spiking = snn.spec.spiking_layers();
  std::vector<float> out;
  if (log) {
    log->batch_percentiles.assign(spiking.size(), {});
    log->thresholds.clear();
  }
  SnnOptions opt;
  opt.timesteps = cfg.calib_timesteps;
  opt.tau = cfg.tau;
  opt.train = true;
  for (std::size_t si = 0; si < spiking.size(); ++si) {
    opt.stop_at_spiking = static_cast<int>(si);
    float vth = 0.0f;
    std::vector<float> pooled;
    for (const auto& rows : batches) {
      Tape tape;
      const Bindings vars = bind_constants(tape, snn.params);
      const Tensor pre =
          snn_forward(snn.spec, snn.params, vars, tape.constant(data.batch_images(rows)), opt).value();
      if (cfg.pooled) {
        pooled.insert(pooled.end(), pre.data().begin(), pre.data().end());
        continue;
      }
      const float p = nearest_rank_percentile(pre.storage(), cfg.percentile);
      if (log) log->batch_percentiles[si].push_back(p);
      if (p > vth) vth = p;
    }
    if (cfg.pooled) vth = nearest_rank_percentile(std::move(pooled), cfg.percentile);
    if (!(vth > 0.0f)) {
      throw ConversionError("layer " + std::to_string(spiking[si]) +
                            ": pre-activations give a non-positive threshold");
    }
    snn.param(threshold_name(spiking[si])) = Tensor::scalar(vth);
    out.push_back(vth);
  }
  if (log) log->thresholds = out;
  return out;
}

void scale_thresholds(Model& snn, float lambda) {
  if (!(lambda > 0.0f && lambda <= 1.0f)) throw std::invalid_argument("threshold scale must lie in (0,1]");
  for (int idx : snn.spec.spiking_layers()) {
    Tensor& t = snn.param(threshold_name(idx));
    t[0] = lambda * t[0];
  }
}

SparsityMask extract_mask(const ParamMap& params) {
  SparsityMask m;
  for (const auto& [name, w] : params) {
    if (!is_prunable(name)) continue;
    LayerMask lm{w.shape(), std::vector<std::uint8_t>(w.size(), 0)};
    for (std::size_t i = 0; i < w.size(); ++i) lm.bits[i] = w[i] != 0.0f ? 1 : 0;
    m.layers[name] = std::move(lm);
  }
  m.kappa = m.sparsity();
  return m;
}

void refresh_batchnorm_stats(Model& snn, const Dataset& data,
                             const std::vector<std::vector<std::size_t>>& batches, int timesteps, float tau) {
  std::map<int, ops::BatchStats> acc;
  for (const auto& rows : batches) {
    Tape tape;
    StatsLog log;
    SnnOptions opt;
    opt.timesteps = timesteps;
    opt.tau = tau;
    opt.train = true;
    opt.stats = &log;
    snn_forward(snn.spec, snn.params, bind_constants(tape, snn.params), tape.constant(data.batch_images(rows)), opt);
    for (const auto& [idx, st] : log) {
      auto& a = acc[idx];
      if (a.mean.empty()) {
        a.mean.assign(st.mean.size(), 0.0);
        a.unbiased_var.assign(st.unbiased_var.size(), 0.0);
      }
      for (std::size_t c = 0; c < st.mean.size(); ++c) {
        a.mean[c] += st.mean[c];
        a.unbiased_var[c] += st.unbiased_var[c];
      }
    }
  }
  const double k = static_cast<double>(batches.size());
  for (const auto& [idx, a] : acc) {
    Tensor& rm = snn.param(param_name(idx, "running_mean"));
    Tensor& rv = snn.param(param_name(idx, "running_var"));
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = static_cast<float>(a.mean[c] / k);
      rv[c] = static_cast<float>(a.unbiased_var[c] / k);
    }
  }
}

Model convert(const Model& ann, const SparsityMask* mask, const ConversionConfig& cfg, const Dataset& train,
              CalibrationLog* log) {
  cfg.validate();
  if (mask) {
    for (const auto& [name, m] : mask->layers) {
      const Tensor& w = ann.param(name);
      if (w.shape() != m.shape) throw ConversionError("mask shape mismatch for " + name);
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!m.bits[i] && w[i] != 0.0f) throw ConversionError("weight " + name + " is nonzero outside the mask");
      }
    }
  }
  Model snn = transfer_weights(ann);
  const auto batches = calibration_batches(train, cfg);
  const std::vector<float> raw = calibrate_thresholds(snn, train, batches, cfg, log);
  scale_thresholds(snn, cfg.lambda);
  if (cfg.refresh_stats) refresh_batchnorm_stats(snn, train, batches, cfg.timesteps, cfg.tau);
  SparsityMask m = extract_mask(snn.params);
  if (mask) {
    m.kappa = mask->kappa;
    m.granularity = mask->granularity;
  }
  snn.mask = std::move(m);
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
  };
  snn.metadata["conversion.percentile"] = num(cfg.percentile);
  snn.metadata["conversion.lambda"] = num(cfg.lambda);
  snn.metadata["conversion.calib_timesteps"] = std::to_string(cfg.calib_timesteps);
  snn.metadata["conversion.batches"] = std::to_string(batches.size());
  snn.metadata["conversion.batch_size"] = std::to_string(cfg.batch_size);
  snn.metadata["conversion.mode"] = cfg.pooled ? "pooled" : "batch-max";
  snn.metadata["conversion.seed"] = std::to_string(cfg.seed);
  snn.metadata["timesteps"] = std::to_string(cfg.timesteps);
  snn.metadata["tau"] = num(cfg.tau);
  const std::vector<int> spiking = snn.spec.spiking_layers();
  for (std::size_t i = 0; i < spiking.size(); ++i) {
    snn.metadata["conversion.raw_threshold." + param_name(spiking[i], "threshold")] = num(raw[i]);
  }
  return snn;
}

}  // namespace rsnn
