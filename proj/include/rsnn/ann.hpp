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

#ifndef RSNN_ANN_HPP_
#define RSNN_ANN_HPP_

#include <span>
#include <string>
#include <vector>

#include "rsnn/attacks.hpp"
#include "rsnn/classifier.hpp"
#include "rsnn/dataset.hpp"
#include "rsnn/network.hpp"
#include "rsnn/optim.hpp"

namespace rsnn {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ReLU interpretation of the layer graph.
Var ann_forward(const NetworkSpec& spec, const ParamMap& params, const Bindings& vars, Var x,
                const ForwardOptions& opt = {});

/// Eval-mode logits, computed in batches.
Tensor ann_logits(const Model& model, const Tensor& x, int batch = 256);

/// Eval-mode classifier; the model must outlive it.
Classifier ann_classifier(const Model& model);

/// CE(clean, y) + lambda * KL(softmax(adv) || softmax(clean)); both branches
/// receive gradients. lambda == 0 returns the cross-entropy node itself.
Var trades_loss(Var logits_clean, Var logits_adv, std::span<const int> y, float lambda);

enum class LossKind { ce, trades };

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  SgdConfig sgd;
  LossKind loss = LossKind::trades;
  float lambda = 2.0f;
  /// Inner maximisation of the trades regulariser.
  AttackSpec inner{AttackKind::pgd, 0.1f, 10, 0.0f, -1.0f, true, std::nullopt};
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochRecord {
  int epoch = 0;
  float lr = 0.0f;
  double loss = 0.0;
  double train_acc = 0.0;  // on the clean training batches, as seen during the epoch
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  double train_acc = 0.0;  // eval-mode, whole training set
  double test_acc = -1.0;  // eval-mode, when a test set was given
};

/// Mini-batch momentum SGD on plain CE or the trades objective. With a mask,
/// pruned weights stay exactly zero. Throws TrainingDiverged on a non-finite
/// loss.
TrainRecord pretrain_robust_ann(Model& model, const Dataset& train, const Dataset* test,
                                const TrainConfig& cfg);

/// Eval-mode clean accuracy.
double evaluate_accuracy(const Classifier& c, const Dataset& data, int batch = 256);

}  // namespace rsnn

#endif  // RSNN_ANN_HPP_
