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

#ifndef RSNN_ATTACKS_HPP_
#define RSNN_ATTACKS_HPP_

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsnn/classifier.hpp"
#include "rsnn/surrogate.hpp"
#include "rsnn/tensor.hpp"

namespace rsnn {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AttackKind { fgsm, rfgsm, pgd };
std::string_view to_string(AttackKind k);
AttackKind parse_attack_kind(std::string_view s);

struct AttackSpec {
  AttackKind kind = AttackKind::fgsm;
  float eps = 0.0f;
  int steps = 1;
  /// PGD step size; <= 0 selects 2.5 * eps / steps.
  float alpha = 0.0f;
  /// RFGSM random step; < 0 selects eps / 2.
  float alpha_r = -1.0f;
  bool random_start = false;
  std::optional<SurrogateSpec> surrogate;

  void validate() const;
  float step_size() const;
  float random_step() const;
};

/// Scalar objective the attacker maximises, built from the logits of x~.
using AttackObjective = std::function<Var(Tape&, Var logits)>;

AttackObjective ce_objective(std::vector<int> labels);
/// KL(softmax(adv) || softmax(clean)) with the clean logits held fixed.
AttackObjective kl_objective(Tensor clean_logits);

/// Gradient of the objective with respect to the input.
Tensor input_gradient(const Classifier& model, const Tensor& x, const AttackObjective& objective);

/// Lower/upper bounds of the eps-ball intersected with [0,1], nudged so that
/// the checks |x~ - x| <= eps and 0 <= x~ <= 1 hold exactly in double.
void ball_bounds(float x, float eps, float& lo, float& hi);
Tensor project(const Tensor& candidate, const Tensor& x, float eps);

/// Uniform [-1,1) noise driving random starts (pgd) and random steps (rfgsm,
/// through its sign).
Tensor attack_noise(const Shape& shape, Rng& rng);

/// Runs spec against the objective. noise is required when the attack is
/// randomised and must match x's shape.
Tensor run_attack(const Classifier& model, const Tensor& x, const AttackObjective& objective,
                  const AttackSpec& spec, const Tensor* noise = nullptr);

Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> y, float eps);
Tensor rfgsm(const Classifier& model, const Tensor& x, std::span<const int> y, float eps,
             float alpha_r, Rng& rng);
Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> y, float eps, int steps,
           float alpha, bool random_start, Rng& rng);

struct EnsembleSpec {
  std::vector<SurrogateSpec> members;
  bool stop_at_first_success = false;

  /// pcw grid, exp grid, rect grid, STE, BPTR, conversion.
  static EnsembleSpec defaults();
  void validate() const;
};

using ClassifierFactory = std::function<Classifier(const SurrogateSpec&)>;

struct EnsembleResult {
  Tensor adversarial;  // first successful member's x~, else the last member's
  std::vector<bool> fooled;
  /// member_fooled[m][i]; false for members skipped on already-fooled samples.
  std::vector<std::vector<bool>> member_fooled;
  double robust_accuracy() const;
};

/// Each member attacks with its own backward rule. Random draws are keyed per
/// (member, sample), so a sample's attack does not depend on which other
/// samples were attacked alongside it.
EnsembleResult ensemble_attack(const ClassifierFactory& factory, const Tensor& x,
                               std::span<const int> y, const AttackSpec& base,
                               const EnsembleSpec& ens, std::uint64_t seed);

/// Fraction of rows whose predicted label equals y.
double accuracy_of(const std::vector<int>& predicted, std::span<const int> y);

}  // namespace rsnn

#endif  // RSNN_ATTACKS_HPP_
