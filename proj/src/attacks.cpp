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

#include "rsnn/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "rsnn/ops.hpp"

namespace rsnn {
namespace {

float sign_of(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

Tensor signed_step(const Tensor& x, const Tensor& g, float step) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + step * sign_of(g[i]);
  return out;
}

void require_unit_box(const Tensor& x) {
  for (float v : x.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw AttackError("attack input outside [0,1]");
  }
}

}  // namespace

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::rfgsm: return "rfgsm";
    case AttackKind::pgd: return "pgd";
  }
  return "?";
}

AttackKind parse_attack_kind(std::string_view s) {
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "rfgsm") return AttackKind::rfgsm;
  if (s == "pgd") return AttackKind::pgd;
  throw std::invalid_argument("unknown attack '" + std::string(s) + "'");
}

void AttackSpec::validate() const {
  if (!(eps >= 0.0f)) throw std::invalid_argument("attack eps must be >= 0");
  if (steps < 1) throw std::invalid_argument("attack steps must be >= 1");
  if (kind == AttackKind::rfgsm && eps > 0.0f && !(random_step() < eps)) {
    throw std::invalid_argument("rfgsm needs alpha_r < eps");
  }
  if (surrogate) surrogate->validate();
}

float AttackSpec::step_size() const { return alpha > 0.0f ? alpha : 2.5f * eps / static_cast<float>(steps); }

float AttackSpec::random_step() const { return alpha_r >= 0.0f ? alpha_r : 0.5f * eps; }

AttackObjective ce_objective(std::vector<int> labels) {
  return [labels = std::move(labels)](Tape&, Var logits) { return ops::cross_entropy(logits, labels); };
}

AttackObjective kl_objective(Tensor clean_logits) {
  return [clean = std::move(clean_logits)](Tape& tape, Var logits) {
    return ops::kl_divergence(logits, tape.constant(clean));
  };
}

Tensor input_gradient(const Classifier& model, const Tensor& x, const AttackObjective& objective) {
  Tape tape;
  Var xv = tape.leaf(x, true);
  Var loss = objective(tape, model.logits(tape, xv));
  tape.backward(loss);
  Tensor g = tape.grad(xv);
  if (!g.all_finite()) throw AttackError("non-finite input gradient");
  return g;
}

void ball_bounds(float x, float eps, float& lo, float& hi) {
  lo = x - eps;
  while (static_cast<double>(x) - static_cast<double>(lo) > static_cast<double>(eps)) {
    lo = std::nextafter(lo, 2.0f);
  }
  hi = x + eps;
  while (static_cast<double>(hi) - static_cast<double>(x) > static_cast<double>(eps)) {
    hi = std::nextafter(hi, -1.0f);
  }
  lo = std::max(lo, 0.0f);
  hi = std::min(hi, 1.0f);
}

Tensor project(const Tensor& candidate, const Tensor& x, float eps) {
  if (candidate.shape() != x.shape()) throw ShapeError("project: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    float lo, hi;
    ball_bounds(x[i], eps, lo, hi);
    const float c = candidate[i];
    out[i] = std::isnan(c) ? x[i] : std::clamp(c, lo, hi);
  }
  return out;
}

Tensor attack_noise(const Shape& shape, Rng& rng) { return rng.uniform_tensor(shape, -1.0f, 1.0f); }

Tensor run_attack(const Classifier& model, const Tensor& x, const AttackObjective& objective,
                  const AttackSpec& spec, const Tensor* noise) {
  spec.validate();
  require_unit_box(x);
  if (spec.eps == 0.0f) return x;
  const bool randomised = spec.kind == AttackKind::rfgsm || (spec.kind == AttackKind::pgd && spec.random_start);
  if (randomised && (!noise || noise->shape() != x.shape())) {
    throw AttackError("randomised attack needs noise shaped like the input");
  }
  switch (spec.kind) {
    case AttackKind::fgsm:
      return project(signed_step(x, input_gradient(model, x, objective), spec.eps), x, spec.eps);
    case AttackKind::rfgsm: {
      const float ar = spec.random_step();
      const Tensor start = project(signed_step(x, *noise, ar), x, ar);
      const Tensor g = input_gradient(model, start, objective);
      return project(signed_step(start, g, spec.eps - ar), x, spec.eps);
    }
    case AttackKind::pgd: {
      Tensor cur = x;
      if (spec.random_start) {
        Tensor moved(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) moved[i] = x[i] + spec.eps * (*noise)[i];
        cur = project(moved, x, spec.eps);
      }
      const float alpha = spec.step_size();
      for (int k = 0; k < spec.steps; ++k) {
        cur = project(signed_step(cur, input_gradient(model, cur, objective), alpha), x, spec.eps);
      }
      return cur;
    }
  }
  throw AttackError("unknown attack kind");
}

Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> y, float eps) {
  AttackSpec spec;
  spec.kind = AttackKind::fgsm;
  spec.eps = eps;
  return run_attack(model, x, ce_objective({y.begin(), y.end()}), spec);
}

Tensor rfgsm(const Classifier& model, const Tensor& x, std::span<const int> y, float eps,
             float alpha_r, Rng& rng) {
  AttackSpec spec;
  spec.kind = AttackKind::rfgsm;
  spec.eps = eps;
  spec.alpha_r = alpha_r;
  const Tensor noise = attack_noise(x.shape(), rng);
  return run_attack(model, x, ce_objective({y.begin(), y.end()}), spec, &noise);
}

Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> y, float eps, int steps,
           float alpha, bool random_start, Rng& rng) {
  AttackSpec spec;
  spec.kind = AttackKind::pgd;
  spec.eps = eps;
  spec.steps = steps;
  spec.alpha = alpha;
  spec.random_start = random_start;
  const Tensor noise = attack_noise(x.shape(), rng);
  return run_attack(model, x, ce_objective({y.begin(), y.end()}), spec, &noise);
}

EnsembleSpec EnsembleSpec::defaults() {
  EnsembleSpec e;
  for (float g : {0.25f, 0.5f, 1.0f, 2.0f, 3.0f}) e.members.push_back(SurrogateSpec::pcw(g));
  for (float d : {0.3f, 1.0f}) {
    for (float s : {0.5f, 1.0f, 2.0f}) e.members.push_back(SurrogateSpec::exp(d, s));
  }
  for (float g : {0.25f, 0.5f, 1.0f, 2.0f, 4.0f}) e.members.push_back(SurrogateSpec::rect(g));
  e.members.push_back(SurrogateSpec::ste());
  e.members.push_back(SurrogateSpec::bptr());
  e.members.push_back(SurrogateSpec::conversion());
  return e;
}

void EnsembleSpec::validate() const {
  if (members.empty()) throw std::invalid_argument("empty attack ensemble");
  for (std::size_t i = 0; i < members.size(); ++i) {
    members[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (members[i] == members[j]) throw std::invalid_argument("duplicate ensemble member " + members[i].name());
    }
  }
}

double EnsembleResult::robust_accuracy() const {
  if (fooled.empty()) return 0.0;
  std::size_t ok = 0;
  for (bool f : fooled) ok += f ? 0 : 1;
  return static_cast<double>(ok) / static_cast<double>(fooled.size());
}

EnsembleResult ensemble_attack(const ClassifierFactory& factory, const Tensor& x,
                               std::span<const int> y, const AttackSpec& base,
                               const EnsembleSpec& ens, std::uint64_t seed) {
  ens.validate();
  const std::size_t n = static_cast<std::size_t>(x.dim(0));
  if (y.size() != n) throw ShapeError("ensemble_attack: label count mismatch");
  const std::size_t row = x.size() / std::max<std::size_t>(n, 1);
  Shape sample = x.shape();
  sample[0] = 1;

  EnsembleResult res;
  res.adversarial = x;
  res.fooled.assign(n, false);
  std::vector<bool> settled(n, false);
  for (std::size_t m = 0; m < ens.members.size(); ++m) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(ens.stop_at_first_success && res.fooled[i])) rows.push_back(i);
    }
    res.member_fooled.emplace_back(n, false);
    if (rows.empty()) continue;
    AttackSpec spec = base;
    spec.surrogate = ens.members[m];
    const Classifier c = factory(ens.members[m]);
    const Tensor xs = x.gather_rows(rows);
    Shape sub_shape = x.shape();
    sub_shape[0] = static_cast<int>(rows.size());
    Tensor noise(sub_shape);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Rng rng = Rng(seed, m + 1).fork(rows[r]);
      const Tensor u = attack_noise(sample, rng);
      std::copy(u.ptr(), u.ptr() + row, noise.ptr() + r * row);
    }
    std::vector<int> ys;
    for (std::size_t i : rows) ys.push_back(y[i]);
    const Tensor adv = run_attack(c, xs, ce_objective(ys), spec, &noise);
    const std::vector<int> pred = predict_labels(c, adv);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t i = rows[r];
      const bool hit = pred[r] != ys[r];
      res.member_fooled[m][i] = hit;
      if (settled[i]) continue;
      std::copy(adv.ptr() + r * row, adv.ptr() + (r + 1) * row, res.adversarial.ptr() + i * row);
      if (hit) {
        res.fooled[i] = true;
        settled[i] = true;
      }
    }
  }
  return res;
}

double accuracy_of(const std::vector<int>& predicted, std::span<const int> y) {
  if (predicted.size() != y.size()) throw ShapeError("accuracy: size mismatch");
  if (y.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += predicted[i] == y[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

}  // namespace rsnn
