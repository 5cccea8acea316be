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

#ifndef RSNN_ENERGY_HPP_
#define RSNN_ENERGY_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "rsnn/dataset.hpp"
#include "rsnn/network.hpp"
#include "rsnn/snn.hpp"

namespace rsnn {

/// Active outgoing connections of each neuron of spiking layer
/// `spiking_index`, shaped like that layer's per-sample output: nonzero
/// (output position, kernel tap) pairs of the next weight layer that read the
/// neuron. Average pooling in between maps each neuron to its pooled position.
Tensor active_fanout(const NetworkSpec& spec, const ParamMap& params, int spiking_index,
                     const SparsityMask* mask = nullptr);
std::vector<Tensor> active_fanouts(const NetworkSpec& spec, const ParamMap& params,
                                   const SparsityMask* mask = nullptr);

struct LayerEnergy {
  int layer = 0;             // layer index in the network spec
  std::size_t neurons = 0;   // per sample
  double spikes = 0.0;       // per sample, summed over time
  double rate = 0.0;         // spikes per neuron per timestep
  double term = 0.0;         // sum_t sum_i psi_i o_i(t), per sample
};

struct EnergyReport {
  int timesteps = 0;
  std::size_t samples = 0;
  double e_ac = 1.0;
  std::vector<LayerEnergy> layers;
  double total_spikes = 0.0;  // per sample
  double energy = 0.0;        // per sample, in the units of e_ac
  double coding_ratio = 0.0;  // total spikes / (neurons * T)
  std::string reference;      // name of the comparison report, if any
  double spike_ratio = 1.0;   // reference spikes / these spikes
  double energy_ratio = 1.0;  // reference energy / this energy

  std::string to_json() const;
  void write_json(const std::filesystem::path& path) const;
  /// layer,neurons,spikes,rate,term rows.
  void write_csv(const std::filesystem::path& path) const;
};

struct SpikeStats {
  std::vector<double> totals;  // per layer, summed over the batch and time
  std::vector<double> rates;   // per layer
  double total = 0.0;          // whole batch
  double ratio = 0.0;          // total / (batch * neurons * T)
};

SpikeStats spike_stats(const SpikeTrace& trace);

/// e_ac * sum_l sum_t sum_i psi_{l,i} o_{l,i}(t), averaged over the traced
/// samples.
EnergyReport estimate_energy(const SpikeTrace& trace, const std::vector<Tensor>& fanouts, double e_ac,
                             const std::vector<int>& layer_ids = {});

/// Eval-mode simulation of up to `cap` samples (0 = all) in batches.
EnergyReport measure_energy(const Model& snn, const Dataset& data, std::size_t cap, int timesteps, float tau,
                            double e_ac = 1.0);

/// Fills the ratio columns relative to `ref`.
void compare_to(EnergyReport& report, const EnergyReport& ref, const std::string& ref_name);

}  // namespace rsnn

#endif  // RSNN_ENERGY_HPP_
