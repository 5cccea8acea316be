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

#ifndef RSNN_CONVERSION_HPP_
#define RSNN_CONVERSION_HPP_

#include <vector>

#include "rsnn/dataset.hpp"
#include "rsnn/network.hpp"
#include "rsnn/snn.hpp"

namespace rsnn {

class ConversionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConversionConfig {
  int calib_timesteps = 100;
  int timesteps = 8;
  float tau = 1.0f;
  double percentile = 99.7;
  float lambda = 0.3f;
  int batches = 10;
  int batch_size = 64;
  /// Percentile of all batches pooled instead of the running max of per-batch
  /// percentiles.
  bool pooled = false;
  /// Re-estimate batch-norm running statistics at `timesteps` after scaling.
  bool refresh_stats = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Copies every parameter, adds a zero threshold per spiking layer and resets
/// batch-norm running statistics to mean 0, variance 1.
Model transfer_weights(const Model& ann);

/// Nearest-rank percentile: the ceil(rho/100 * n)-th smallest value.
float nearest_rank_percentile(std::vector<float> values, double rho);

/// Calibration rows: a seeded permutation of the training set cut into
/// `batches` batches of `batch_size`.
std::vector<std::vector<std::size_t>> calibration_batches(const Dataset& data, const ConversionConfig& cfg);

struct CalibrationLog {
  /// per spiking layer, the percentile observed in each batch
  std::vector<std::vector<float>> batch_percentiles;
  std::vector<float> thresholds;
};

/// Layer by layer from the input: threshold = running max over batches of
/// each batch's percentile of post-batch-norm pre-activations over all
/// neurons, timesteps and samples (or the pooled percentile). Batch-norm
/// normalises with batch statistics while calibrating.
std::vector<float> calibrate_thresholds(Model& snn, const Dataset& data,
                                        const std::vector<std::vector<std::size_t>>& batches,
                                        const ConversionConfig& cfg, CalibrationLog* log = nullptr);

void scale_thresholds(Model& snn, float lambda);

/// 1[w != 0] per prunable weight.
SparsityMask extract_mask(const ParamMap& params);

/// Running statistics set to the average of train-mode batch statistics over
/// the batches.
void refresh_batchnorm_stats(Model& snn, const Dataset& data,
                             const std::vector<std::vector<std::size_t>>& batches, int timesteps, float tau);

/// transfer -> calibrate -> scale -> (refresh) -> extract mask. A supplied
/// mask must agree with the ANN's zeros.
Model convert(const Model& ann, const SparsityMask* mask, const ConversionConfig& cfg, const Dataset& train,
              CalibrationLog* log = nullptr);

}  // namespace rsnn

#endif  // RSNN_CONVERSION_HPP_
