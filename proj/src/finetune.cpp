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

#include "rsnn/finetune.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rsnn/ann.hpp"
#include "rsnn/ops.hpp"

namespace rsnn {

void FinetuneConfig::validate() const {
  if (!(beta >= 0.0f)) throw std::invalid_argument("beta must be >= 0");
  if (!(eps >= 0.0f)) throw std::invalid_argument("eps must be >= 0");
  if (!(sgd.lr > 0.0f)) throw std::invalid_argument("learning rate must be > 0");
  if (batch_size < 1 || timesteps < 1) throw std::invalid_argument("batch size and T must be >= 1");
  if (!(threshold_floor > 0.0f)) throw std::invalid_argument("threshold floor must be > 0");
  surrogate.validate();
}

Var snn_robust_loss(Var logits_clean, Var logits_adv, std::span<const int> y, float beta) {
  return trades_loss(logits_clean, logits_adv, y, beta);
}

void masked_update(Tensor& w, const Tensor& dw, const LayerMask& m, float lr) {
  if (w.shape() != dw.shape() || w.shape() != m.shape) throw ShapeError("masked_update: shape mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (m.bits[i]) w[i] -= lr * dw[i];
  }
}

void FinetuneHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,lr,loss,ce,kl,train_acc,test_acc,probe_robust_acc,threshold_clamps\n";
  char line[256];
  for (const FinetuneEpoch& e : epochs) {
    std::snprintf(line, sizeof(line), "%d,%.6g,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%d\n", e.epoch, e.lr, e.loss, e.ce,
                  e.kl, e.train_acc, e.test_acc, e.probe_acc, e.threshold_clamps);
    out << line;
  }
}

double snn_accuracy(const Model& snn, const Dataset& data, int timesteps, float tau) {
  if (data.size() == 0) return 0.0;
  const std::vector<int> pred = ops::argmax_rows(snn_logits(snn, data.images, timesteps, tau));
  return accuracy_of(pred, data.labels);
}

FinetuneHistory finetune_snn(Model& snn, const Dataset& train, const Dataset* test, const FinetuneConfig& cfg) {
  cfg.validate();
  if (!snn.is_snn()) throw std::invalid_argument("finetune_snn needs a converted model");
  if (!snn.mask) snn.mask = SparsityMask{};
  const SparsityMask& mask = *snn.mask;
  snn.apply_mask();
  FinetuneHistory hist;
  Sgd opt(cfg.sgd);
  AttackSpec inner;
  inner.kind = AttackKind::rfgsm;
  inner.eps = cfg.eps;
  inner.alpha_r = cfg.alpha_r;
  const bool adversarial = cfg.beta > 0.0f;
  const Rng root(cfg.seed, 0x666e74);
  const std::size_t n = train.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    FinetuneEpoch rec;
    rec.epoch = epoch;
    rec.lr = cfg.sgd.cosine ? cosine_lr(cfg.sgd.lr, epoch, cfg.epochs) : cfg.sgd.lr;
    Rng erng = root.fork(static_cast<std::uint64_t>(epoch));
    const std::vector<std::size_t> order = erng.permutation(n);
    std::size_t seen = 0, correct = 0, batches = 0;
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::span<const std::size_t> rows(order.data() + b, std::min(n - b, static_cast<std::size_t>(cfg.batch_size)));
      const Tensor x = train.batch_images(rows);
      const std::vector<int> y = train.batch_labels(rows);
      Tensor x_adv;
      if (adversarial) {
        const Classifier c = snn_classifier(snn, cfg.timesteps, cfg.tau, cfg.surrogate);
        Rng arng = erng.fork(b + 1);
        const Tensor noise = attack_noise(x.shape(), arng);
        x_adv = run_attack(c, x, kl_objective(c.predict_logits(x)), inner, &noise);
      }
      Tape tape;
      const Bindings vars = bind_parameters(tape, snn.params, [](const std::string&) { return true; });
      SnnOptions so;
      so.timesteps = cfg.timesteps;
      so.tau = cfg.tau;
      so.surrogate = cfg.surrogate;
      so.train = true;
      StatsLog clean_stats, adv_stats;
      so.stats = &clean_stats;
      Var logits = snn_forward(snn.spec, snn.params, vars, tape.constant(x), so);
      Var ce = ops::cross_entropy(logits, y);
      Var loss = ce;
      double kl_value = 0.0;
      if (adversarial) {
        so.stats = &adv_stats;
        Var logits_adv = snn_forward(snn.spec, snn.params, vars, tape.constant(x_adv), so);
        Var kl = ops::kl_divergence(logits_adv, logits);
        kl_value = kl.value().item();
        loss = ops::add(ce, ops::scale(kl, cfg.beta));
      }
      const float lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw TrainingDiverged("snn finetuning loss became non-finite at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      std::map<std::string, Tensor> grads;
      for (const auto& [name, v] : vars) grads[name] = tape.grad(v);
      opt.step(snn.params, grads, rec.lr, &mask);
      for (int idx : snn.spec.spiking_layers()) {
        float& th = snn.param(threshold_name(idx))[0];
        if (!(th >= cfg.threshold_floor)) {
          th = cfg.threshold_floor;
          ++rec.threshold_clamps;
        }
      }
      update_running_stats(snn.spec, snn.params, clean_stats);
      if (adversarial) update_running_stats(snn.spec, snn.params, adv_stats);
      const std::vector<int> pred = ops::argmax_rows(logits.value());
      for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i] ? 1 : 0;
      seen += y.size();
      rec.loss += lv;
      rec.ce += ce.value().item();
      rec.kl += kl_value;
      ++batches;
    }
    if (batches) {
      rec.loss /= static_cast<double>(batches);
      rec.ce /= static_cast<double>(batches);
      rec.kl /= static_cast<double>(batches);
    }
    rec.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    if (test && test->size() > 0) {
      rec.test_acc = snn_accuracy(snn, *test, cfg.timesteps, cfg.tau);
      const Dataset probe = test->head(static_cast<std::size_t>(std::max(cfg.probe_samples, 0)));
      const float pe = cfg.probe_eps >= 0.0f ? cfg.probe_eps : cfg.eps;
      if (probe.size() > 0) {
        const Classifier c = snn_classifier(snn, cfg.timesteps, cfg.tau, cfg.surrogate);
        const Tensor adv = fgsm(c, probe.images, probe.labels, pe);
        rec.probe_acc = accuracy_of(predict_labels(c, adv), probe.labels);
      }
    }
    if (cfg.verbose) {
      std::fprintf(stderr, "finetune epoch %d lr %.4g loss %.4f train %.4f test %.4f probe %.4f\n", epoch, rec.lr,
                   rec.loss, rec.train_acc, rec.test_acc, rec.probe_acc);
    }
    hist.epochs.push_back(rec);
  }
  return hist;
}

}  // namespace rsnn
