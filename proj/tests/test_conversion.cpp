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

#include <cstring>

#include "doctest.h"
#include "support.hpp"
#include "rsnn/conversion.hpp"

using namespace rsnn;
namespace T = rsnn::testing;

namespace {

ConversionConfig small_config(bool pooled) {
  ConversionConfig c;
  c.calib_timesteps = 12;
  c.timesteps = 4;
  c.batches = 3;
  c.batch_size = 8;
  c.pooled = pooled;
  c.seed = 5;
  return c;
}

// Replays calibration with the sort-based order statistic.
std::vector<float> calibration_oracle(const Model& ann, const Dataset& data, const ConversionConfig& cfg) {
  Model snn = transfer_weights(ann);
  const auto batches = calibration_batches(data, cfg);
  std::vector<float> out;
  const std::vector<int> spiking = snn.spec.spiking_layers();
  for (std::size_t si = 0; si < spiking.size(); ++si) {
    SnnOptions opt;
    opt.timesteps = cfg.calib_timesteps;
    opt.tau = cfg.tau;
    opt.train = true;
    opt.stop_at_spiking = static_cast<int>(si);
    std::vector<float> all;
    float best = -1e30f;
    for (const auto& rows : batches) {
      Tape tape;
      const Tensor pre = snn_forward(snn.spec, snn.params, bind_constants(tape, snn.params),
                                     tape.constant(data.batch_images(rows)), opt)
                             .value();
      const std::vector<float> v(pre.data().begin(), pre.data().end());
      all.insert(all.end(), v.begin(), v.end());
      best = std::max(best, T::percentile_oracle(v, cfg.percentile));
    }
    const float th = cfg.pooled ? T::percentile_oracle(all, cfg.percentile) : best;
    snn.param(threshold_name(spiking[si])) = Tensor::scalar(th);
    out.push_back(th);
  }
  return out;
}

}  // namespace

TEST_CASE("nearest-rank percentile equals the order statistic") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(300);
    std::vector<float> v(n);
    for (float& x : v) x = rng.normal();
    const double rho = trial % 5 == 0 ? 100.0 : trial % 7 == 0 ? 50.0 : rng.uniform(0.1f, 100.0f);
    CAPTURE(n);
    CAPTURE(rho);
    CHECK(nearest_rank_percentile(v, rho) == T::percentile_oracle(v, rho));
  }
  CHECK(nearest_rank_percentile({5, 1, 3, 2, 4}, 40.0) == 2.0f);
  CHECK(nearest_rank_percentile({5, 1, 3, 2, 4}, 100.0) == 5.0f);
  CHECK_THROWS(nearest_rank_percentile({}, 50.0));
}

TEST_CASE("calibration matches the order-statistic oracle, per-batch max and pooled") {
  const Model ann = T::tiny_conv(2);
  const Dataset data = T::random_images(3, 40, {1, 8, 8}, 10);
  for (bool pooled : {false, true}) {
    CAPTURE(pooled);
    const ConversionConfig cfg = small_config(pooled);
    Model snn = transfer_weights(ann);
    CalibrationLog log;
    const std::vector<float> got = calibrate_thresholds(snn, data, calibration_batches(data, cfg), cfg, &log);
    CHECK(got == calibration_oracle(ann, data, cfg));
    if (!pooled) {
      for (std::size_t l = 0; l < got.size(); ++l)
        CHECK(got[l] == *std::max_element(log.batch_percentiles[l].begin(), log.batch_percentiles[l].end()));
    }
  }
}

TEST_CASE("conversion preserves weights bit for bit and scales thresholds exactly") {
  const Model ann = T::tiny_conv(4);
  const Dataset data = T::random_images(5, 40, {1, 8, 8}, 10);
  ConversionConfig cfg = small_config(false);
  cfg.lambda = 0.3f;
  CalibrationLog log;
  const Model snn = convert(ann, nullptr, cfg, data, &log);
  CHECK(snn.is_snn());
  for (const auto& [name, t] : ann.params) {
    if (is_buffer(name)) continue;
    CHECK(std::memcmp(t.ptr(), snn.params.at(name).ptr(), t.size() * sizeof(float)) == 0);
  }
  const std::vector<float> th = thresholds(snn);
  REQUIRE(th.size() == log.thresholds.size());
  for (std::size_t l = 0; l < th.size(); ++l) {
    CHECK(th[l] > 0.0f);
    CHECK(th[l] == 0.3f * log.thresholds[l]);
  }
  Model again = transfer_weights(ann);
  calibrate_thresholds(again, data, calibration_batches(data, cfg), cfg);
  const std::vector<float> raw = thresholds(again);
  scale_thresholds(again, 0.5f);
  for (std::size_t l = 0; l < raw.size(); ++l) CHECK(thresholds(again)[l] == 0.5f * raw[l]);
  CHECK_THROWS(scale_thresholds(again, 0.0f));
  CHECK_THROWS(scale_thresholds(again, 1.5f));
}

TEST_CASE("conversion carries the sparsity mask and rejects inconsistent ones") {
  Model ann = T::tiny_conv(6);
  const Dataset data = T::random_images(7, 32, {1, 8, 8}, 10);
  const SparsityMask mask = mask_from_scores(lwm_scores(ann.params), 0.6, Granularity::uniform);
  ann = apply_sparsity(ann, mask);
  const Model snn = convert(ann, &mask, small_config(false), data);
  REQUIRE(snn.mask.has_value());
  CHECK(*snn.mask == mask);
  CHECK(extract_mask(snn.params).nnz() <= mask.nnz());
  // a dense model has nonzero weights where the mask says pruned
  CHECK_THROWS_AS(convert(T::tiny_conv(6), &mask, small_config(false), data), ConversionError);
}

TEST_CASE("conversion config validation") {
  ConversionConfig c;
  c.percentile = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.lambda = 2.0f;
  CHECK_THROWS(c.validate());
  c = {};
  c.calib_timesteps = 0;
  CHECK_THROWS(c.validate());
}
