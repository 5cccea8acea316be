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

#include "rsnn/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsnn/ops.hpp"

namespace rsnn {
namespace {

struct Ranked {
  float score;
  std::size_t index;
};

bool ahead(const Ranked& a, const Ranked& b) {
  return a.score > b.score || (a.score == b.score && a.index < b.index);
}

// Indices of the k best entries of `items` (any order).
void select_top(std::vector<Ranked>& items, std::size_t k) {
  if (k >= items.size()) return;
  std::nth_element(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(), ahead);
  items.resize(k);
}

void check_scores(const std::string& name, const Tensor& s) {
  if (!s.all_finite()) throw MaskError("non-finite importance score in " + name);
}

LayerMask layer_top(const Tensor& s, std::size_t keep) {
  LayerMask m{s.shape(), std::vector<std::uint8_t>(s.size(), 0)};
  std::vector<Ranked> items(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) items[i] = {s[i], i};
  select_top(items, keep);
  for (const Ranked& r : items) m.bits[r.index] = 1;
  return m;
}

// Per-row best weight first, then the remaining keep - rows by rank.
LayerMask layer_top_with_floor(const Tensor& s, std::size_t keep) {
  const std::size_t rows = static_cast<std::size_t>(s.dim(0));
  const std::size_t per = s.size() / rows;
  LayerMask m{s.shape(), std::vector<std::uint8_t>(s.size(), 0)};
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = r * per;
    for (std::size_t j = r * per + 1; j < (r + 1) * per; ++j) {
      if (s[j] > s[best]) best = j;
    }
    m.bits[best] = 1;
  }
  std::vector<Ranked> items;
  items.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!m.bits[i]) items.push_back({s[i], i});
  }
  select_top(items, keep > rows ? keep - rows : 0);
  for (const Ranked& r : items) m.bits[r.index] = 1;
  return m;
}

std::map<std::string, Tensor> to_vars_grad(Tape& tape, const std::map<std::string, Var>& leaves) {
  std::map<std::string, Tensor> g;
  for (const auto& [name, v] : leaves) g[name] = tape.grad(v);
  return g;
}

}  // namespace

std::size_t keep_budget(double kappa, std::size_t n) {
  if (!(kappa >= 0.0 && kappa < 1.0)) throw MaskError("kappa must lie in [0,1)");
  return static_cast<std::size_t>(std::floor((1.0 - kappa) * static_cast<double>(n) + 1e-9));
}

SparsityMask mask_from_scores(const ScoreMap& scores, double kappa, Granularity granularity,
                              const MaskOptions& opt) {
  if (!(kappa >= 0.0 && kappa < 1.0)) throw MaskError("kappa must lie in [0,1)");
  SparsityMask mask;
  mask.kappa = kappa;
  mask.granularity = granularity;
  std::size_t n = 0;
  for (const auto& [name, s] : scores) {
    check_scores(name, s);
    n += s.size();
  }
  switch (granularity) {
    case Granularity::uniform:
      for (const auto& [name, s] : scores) mask.layers[name] = layer_top(s, keep_budget(kappa, s.size()));
      break;
    case Granularity::global: {
      std::vector<Ranked> items;
      items.reserve(n);
      std::vector<std::pair<std::string, std::size_t>> offsets;
      std::size_t off = 0;
      for (const auto& [name, s] : scores) {
        offsets.emplace_back(name, off);
        for (std::size_t i = 0; i < s.size(); ++i) items.push_back({s[i], off + i});
        mask.layers[name] = LayerMask{s.shape(), std::vector<std::uint8_t>(s.size(), 0)};
        off += s.size();
      }
      select_top(items, keep_budget(kappa, n));
      for (const Ranked& r : items) {
        auto it = std::upper_bound(offsets.begin(), offsets.end(), r.index,
                                   [](std::size_t v, const auto& o) { return v < o.second; });
        --it;
        mask.layers[it->first].bits[r.index - it->second] = 1;
      }
      break;
    }
    case Granularity::nonuniform: {
      if (!opt.quotas) throw MaskError("nonuniform masks need per-layer quotas");
      const std::size_t budget = keep_budget(kappa, n);
      std::vector<std::string> names;
      std::vector<std::size_t> keep, floor_keep;
      std::size_t floor_total = 0, total = 0;
      for (const auto& [name, s] : scores) {
        auto q = opt.quotas->find(name);
        if (q == opt.quotas->end()) throw MaskError("missing quota for " + name);
        const float r = std::clamp(q->second, 0.0f, 1.0f);
        const std::size_t rows = static_cast<std::size_t>(s.dim(0));
        std::size_t k = static_cast<std::size_t>(std::floor(static_cast<double>(r) * static_cast<double>(s.size()) + 1e-9));
        k = std::clamp(k, rows, s.size());
        names.push_back(name);
        keep.push_back(k);
        floor_keep.push_back(rows);
        floor_total += rows;
        total += k;
      }
      if (floor_total > budget) {
        throw MaskError("infeasible quotas: one weight per output unit needs " + std::to_string(floor_total) +
                        " weights but the budget is " + std::to_string(budget));
      }
      if (total > budget) {
        // Shrink the slack above the per-unit floor proportionally, then
        // settle the remainder one weight at a time from the largest slack.
        const std::size_t excess = total - budget;
        const std::size_t slack_total = total - floor_total;
        std::size_t removed = 0;
        for (std::size_t l = 0; l < keep.size(); ++l) {
          const std::size_t slack = keep[l] - floor_keep[l];
          const std::size_t cut = static_cast<std::size_t>(
              static_cast<long double>(excess) * slack / static_cast<long double>(slack_total));
          keep[l] -= std::min(cut, slack);
          removed += std::min(cut, slack);
        }
        while (removed < excess) {
          std::size_t pick = 0, best = 0;
          for (std::size_t l = 0; l < keep.size(); ++l) {
            if (keep[l] - floor_keep[l] > best) {
              best = keep[l] - floor_keep[l];
              pick = l;
            }
          }
          --keep[pick];
          ++removed;
        }
      }
      for (std::size_t l = 0; l < names.size(); ++l) {
        mask.layers[names[l]] = layer_top_with_floor(scores.at(names[l]), keep[l]);
      }
      break;
    }
  }
  if (!opt.allow_empty_layer) {
    for (const auto& [name, m] : mask.layers) {
      if (m.nnz() == 0) throw MaskError("sparsity leaves layer " + name + " with no weights");
    }
  }
  return mask;
}

ScoreMap lwm_scores(const ParamMap& params) {
  ScoreMap s;
  for (const auto& [name, w] : params) {
    if (!is_prunable(name)) continue;
    Tensor a(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = std::fabs(w[i]);
    s[name] = std::move(a);
  }
  return s;
}

ScoreMap normalized_lwm_scores(const ParamMap& params) {
  ScoreMap s = lwm_scores(params);
  for (auto& [name, t] : s) {
    float mx = 0.0f;
    for (float v : t.data()) mx = std::max(mx, v);
    if (mx > 0.0f) {
      for (float& v : t.data()) v /= mx;
    }
  }
  return s;
}

Model apply_sparsity(const Model& model, const SparsityMask& mask) {
  Model out = model;
  for (const auto& [name, m] : mask.layers) {
    if (!out.params.count(name)) throw MaskError("mask names unknown weight " + name);
  }
  out.mask = mask;
  out.apply_mask();
  return out;
}

ImportanceScores optimize_scores(const Model& model, const Dataset& train, double kappa,
                                 const ScoreConfig& cfg, Granularity mode) {
  if (mode == Granularity::global) throw MaskError("score optimisation supports uniform and nonuniform modes");
  if (cfg.robust) cfg.inner.validate();
  ImportanceScores out;
  out.scores = normalized_lwm_scores(model.params);
  std::size_t n = 0;
  for (const auto& [name, s] : out.scores) n += s.size();
  if (mode == Granularity::nonuniform) {
    for (const auto& [name, s] : out.scores) out.quotas[name] = static_cast<float>(1.0 - kappa);
  }
  std::map<std::string, float> quota_logit;  // sigmoid(q) = r
  for (const auto& [name, r] : out.quotas) quota_logit[name] = std::log(r / (1.0f - r + 1e-12f));

  Sgd opt(cfg.sgd);
  const Rng root(cfg.seed, 0x73636f);
  const std::size_t total = train.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = cfg.sgd.cosine ? cosine_lr(cfg.sgd.lr, epoch, cfg.epochs) : cfg.sgd.lr;
    Rng erng = root.fork(static_cast<std::uint64_t>(epoch));
    const std::vector<std::size_t> order = erng.permutation(total);
    for (std::size_t b = 0; b < total; b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::span<const std::size_t> rows(order.data() + b,
                                              std::min(total - b, static_cast<std::size_t>(cfg.batch_size)));
      const Tensor x = train.batch_images(rows);
      const std::vector<int> y = train.batch_labels(rows);
      MaskOptions mo;
      mo.quotas = mode == Granularity::nonuniform ? &out.quotas : nullptr;
      const SparsityMask mask = mask_from_scores(out.scores, kappa, mode, mo);
      const Model masked = apply_sparsity(model, mask);
      Tensor x_adv;
      if (cfg.robust) {
        const Classifier c = ann_classifier(masked);
        Rng arng = erng.fork(b + 1);
        const Tensor noise = attack_noise(x.shape(), arng);
        x_adv = run_attack(c, x, kl_objective(c.predict_logits(x)), cfg.inner, &noise);
      }
      Tape tape;
      Bindings vars = bind_constants(tape, model.params);
      std::map<std::string, Var> leaves;
      for (const auto& [name, s] : out.scores) {
        leaves[name] = tape.leaf(s, true);
        vars[name] = ops::masked_weight_ste(vars.at(name), leaves[name], mask.layers.at(name).as_tensor());
      }
      ForwardOptions fo;
      fo.train = true;
      Var logits = ann_forward(model.spec, model.params, vars, tape.constant(x), fo);
      Var loss = cfg.robust
                     ? trades_loss(logits, ann_forward(model.spec, model.params, vars, tape.constant(x_adv), fo), y,
                                   cfg.lambda)
                     : ops::cross_entropy(logits, y);
      if (!std::isfinite(loss.value().item())) {
        throw TrainingDiverged("score optimisation loss became non-finite at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      const std::map<std::string, Tensor> grads = to_vars_grad(tape, leaves);
      if (mode == Granularity::nonuniform) {
        double used = 0.0;
        for (const auto& [name, r] : out.quotas) used += static_cast<double>(r) * out.scores.at(name).size();
        const double over = std::max(0.0, used / static_cast<double>(n) - (1.0 - kappa));
        for (auto& [name, r] : out.quotas) {
          // Loss change from admitting the next-ranked weights of the layer:
          // layer size times their mean mask gradient.
          const Tensor& s = out.scores.at(name);
          const Tensor& g = grads.at(name);
          const LayerMask& m = mask.layers.at(name);
          std::vector<Ranked> outside;
          for (std::size_t i = 0; i < s.size(); ++i) {
            if (!m.bits[i]) outside.push_back({s[i], i});
          }
          const std::size_t band = std::max<std::size_t>(1, s.size() / 100);
          select_top(outside, band);
          double gm = 0.0;
          for (const Ranked& o : outside) gm += g[o.index];
          const double dl = outside.empty() ? 0.0 : gm / static_cast<double>(outside.size()) * static_cast<double>(s.size());
          const double dp = 2.0 * cfg.quota_penalty * over * static_cast<double>(s.size()) / static_cast<double>(n);
          float& q = quota_logit[name];
          q -= static_cast<float>(cfg.quota_lr * (dl + dp) * r * (1.0 - r));
          r = 1.0f / (1.0f + std::exp(-q));
        }
      }
      opt.step(out.scores, grads, lr);
    }
  }
  return out;
}

TrainRecord finetune_sparse_ann(Model& model, const SparsityMask& mask, const Dataset& train,
                                const Dataset* test, const TrainConfig& cfg) {
  model = apply_sparsity(model, mask);
  return pretrain_robust_ann(model, train, test, cfg);
}

double robust_loss(const Model& model, const Dataset& data, const AttackSpec& inner, float lambda,
                   std::uint64_t seed, int batch) {
  const Classifier c = ann_classifier(model);
  double sum = 0.0;
  const int n = static_cast<int>(data.size());
  const Rng root(seed, 0x726c);
  for (int b = 0; b < n; b += batch) {
    const int e = std::min(n, b + batch);
    const Tensor x = data.images.slice_rows(b, e);
    const std::vector<int> y(data.labels.begin() + b, data.labels.begin() + e);
    const Tensor clean = c.predict_logits(x);
    Tensor x_adv = x;
    if (lambda > 0.0f) {
      Rng rng = root.fork(static_cast<std::uint64_t>(b));
      const Tensor noise = attack_noise(x.shape(), rng);
      x_adv = run_attack(c, x, kl_objective(clean), inner, &noise);
    }
    Tape tape;
    Var loss = trades_loss(tape.constant(clean), tape.constant(c.predict_logits(x_adv)), y, lambda);
    sum += static_cast<double>(loss.value().item()) * (e - b);
  }
  return n ? sum / n : 0.0;
}

}  // namespace rsnn
