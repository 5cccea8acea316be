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

#ifndef RSNN_PIPELINE_HPP_
#define RSNN_PIPELINE_HPP_

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "rsnn/ann.hpp"
#include "rsnn/attacks.hpp"
#include "rsnn/config.hpp"
#include "rsnn/conversion.hpp"
#include "rsnn/dataset.hpp"
#include "rsnn/energy.hpp"
#include "rsnn/finetune.hpp"
#include "rsnn/pruning.hpp"

namespace rsnn {

inline constexpr const char* kDefaultArchitecture =
    "conv:16:3:1:1,bn,relu,pool:2,conv:32:3:1:1,bn,relu,pool:2,flatten,linear:128,bn,relu,linear:10:bias";

/// Keys accepted / required by each subcommand's config.
std::set<std::string> known_keys(const std::string& command);
std::set<std::string> required_keys(const std::string& command);

/// dataset = glyphs | blobs | idx | raw, with the matching size or path keys.
DatasetPair load_data(const Config& cfg);

TrainConfig train_config(const Config& cfg, const std::string& epochs_key = "epochs");
ConversionConfig conversion_config(const Config& cfg);
FinetuneConfig finetune_config(const Config& cfg);

struct EvalConfig {
  std::vector<AttackKind> attacks{AttackKind::fgsm, AttackKind::pgd};
  std::vector<float> eps{0.0f};
  int pgd_steps = 10;
  float pgd_alpha = 0.0f;  // <= 0: 2.5 * eps / steps
  std::size_t samples = 0;  // 0: the whole test set
  std::optional<EnsembleSpec> ensemble;  // SNN targets only; defaults when unset
  bool stop_at_first_success = true;
  int timesteps = 0;  // 0: take the checkpoint's value
  float tau = 0.0f;
  std::uint64_t seed = 0;
  int batch = 100;
};

struct EvalRow {
  std::string attack;
  float eps = 0.0f;
  int steps = 1;
  double robust_acc = 0.0;
};

struct EvalReport {
  std::string model_kind;
  std::size_t samples = 0;
  double clean_acc = 0.0;
  std::vector<EvalRow> rows;

  std::string to_json() const;
  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

EvalConfig eval_config(const Config& cfg);
/// Clean plus robust accuracy for every (attack, eps); SNNs face the
/// surrogate ensemble, ANNs the plain attack.
EvalReport evaluate_model(const Model& model, const Dataset& test, const EvalConfig& cfg);

int model_timesteps(const Model& m, int fallback = 8);
float model_tau(const Model& m, float fallback = 1.0f);

Model run_pretrain(const Config& cfg, const DatasetPair& data, TrainRecord* record = nullptr);
Model run_prune(const Config& cfg, const Model& ann, const DatasetPair& data, TrainRecord* record = nullptr);
Model run_convert(const Config& cfg, const Model& ann, const DatasetPair& data);
Model run_finetune(const Config& cfg, const Model& snn, const DatasetPair& data, FinetuneHistory* history = nullptr);
EnergyReport run_energy(const Config& cfg, const Model& snn, const Model* reference, const DatasetPair& data);

}  // namespace rsnn

#endif  // RSNN_PIPELINE_HPP_
