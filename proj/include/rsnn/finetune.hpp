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

#ifndef RSNN_FINETUNE_HPP_
#define RSNN_FINETUNE_HPP_

#include <filesystem>
#include <span>
#include <vector>

#include "rsnn/attacks.hpp"
#include "rsnn/dataset.hpp"
#include "rsnn/optim.hpp"
#include "rsnn/snn.hpp"

namespace rsnn {

struct FinetuneConfig {
  int epochs = 80;
  int batch_size = 64;
  float beta = 2.0f;
  float eps = 2.0f / 255.0f;
  /// RFGSM random step; < 0 selects eps / 2.
  float alpha_r = -1.0f;
  SgdConfig sgd{0.001f, 0.9f, 1e-4f, true};
  int timesteps = 8;
  float tau = 1.0f;
  SurrogateSpec surrogate = SurrogateSpec::pcw(1.0f);
  float threshold_floor = 1e-3f;
  /// FGSM probe on the test set after every epoch; eps < 0 reuses eps.
  float probe_eps = -1.0f;
  int probe_samples = 256;
  std::uint64_t seed = 0;
  bool verbose = false;

  void validate() const;
};

/// CE(clean, y) + beta * KL(softmax(adv) || softmax(clean)).
Var snn_robust_loss(Var logits_clean, Var logits_adv, std::span<const int> y, float beta);

/// w <- w - lr * (dw * m).
void masked_update(Tensor& w, const Tensor& dw, const LayerMask& m, float lr);

struct FinetuneEpoch {
  int epoch = 0;
  float lr = 0.0f;
  double loss = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  double train_acc = 0.0;
  double test_acc = -1.0;
  double probe_acc = -1.0;
  int threshold_clamps = 0;
};

struct FinetuneHistory {
  std::vector<FinetuneEpoch> epochs;
  void write_csv(const std::filesystem::path& path) const;
};

/// Robust sparse finetuning: RFGSM against the KL term (eval mode), clean and
/// adversarial train-mode forwards, BPTT with the training surrogate, masked
/// weight updates, unmasked batch-norm affine and threshold updates, and
/// thresholds floored after every step. beta == 0 drops the adversarial
/// branch entirely.
FinetuneHistory finetune_snn(Model& snn, const Dataset& train, const Dataset* test, const FinetuneConfig& cfg);

/// Eval-mode clean accuracy of an SNN.
double snn_accuracy(const Model& snn, const Dataset& data, int timesteps, float tau);

}  // namespace rsnn

#endif  // RSNN_FINETUNE_HPP_
