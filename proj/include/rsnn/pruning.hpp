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

#ifndef RSNN_PRUNING_HPP_
#define RSNN_PRUNING_HPP_

#include <map>
#include <string>

#include "rsnn/ann.hpp"

namespace rsnn {

class MaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ScoreMap = std::map<std::string, Tensor>;

struct ImportanceScores {
  ScoreMap scores;                      // keyed by weight parameter name
  std::map<std::string, float> quotas;  // r per layer, nonuniform mode only
};

struct MaskOptions {
  bool allow_empty_layer = false;
  /// Nonuniform keep ratios r per layer; required for Granularity::nonuniform.
  const std::map<std::string, float>* quotas = nullptr;
};

/// floor((1 - kappa) * n), guarded against representation error.
std::size_t keep_budget(double kappa, std::size_t n);

/// Keeps the top-sigma scores of each scope (layer or whole net), ranking by
/// score then lowest flat index. Nonuniform mode keeps floor(r*n) per layer,
/// at least one weight per output unit, and never more than the global
/// budget in total.
SparsityMask mask_from_scores(const ScoreMap& scores, double kappa, Granularity granularity,
                              const MaskOptions& opt = {});

/// |w| for every prunable weight.
ScoreMap lwm_scores(const ParamMap& params);

/// |w| / max|w| per layer.
ScoreMap normalized_lwm_scores(const ParamMap& params);

struct ScoreConfig {
  int epochs = 20;
  int batch_size = 64;
  SgdConfig sgd{0.1f, 0.9f, 1e-4f, true};
  /// Robust objective: trades with this lambda and inner attack; lambda 0 and
  /// robust false give plain CE.
  bool robust = true;
  float lambda = 2.0f;
  AttackSpec inner{AttackKind::pgd, 0.1f, 10, 0.0f, -1.0f, true, std::nullopt};
  float quota_lr = 0.5f;
  float quota_penalty = 10.0f;
  std::uint64_t seed = 0;
};

/// Learns scores with the weights frozen: the forward uses w*m(s) and s
/// receives the straight-through gradient g*w. Returns the learned scores
/// (and quotas in nonuniform mode).
ImportanceScores optimize_scores(const Model& model, const Dataset& train, double kappa,
                                 const ScoreConfig& cfg, Granularity mode);

/// Copy of the model with the mask attached and applied.
Model apply_sparsity(const Model& model, const SparsityMask& mask);

/// Adversarial finetuning of the masked model; pruned weights stay 0.0.
TrainRecord finetune_sparse_ann(Model& model, const SparsityMask& mask, const Dataset& train,
                                const Dataset* test, const TrainConfig& cfg);

/// Mean trades (or CE when lambda is 0) loss of the eval-mode model over the
/// dataset, with adversaries crafted by `inner` under `seed`.
double robust_loss(const Model& model, const Dataset& data, const AttackSpec& inner, float lambda,
                   std::uint64_t seed, int batch = 128);

}  // namespace rsnn

#endif  // RSNN_PRUNING_HPP_
