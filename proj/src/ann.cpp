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

#include "rsnn/ann.hpp"

#include <cmath>
#include <cstdio>

#include "rsnn/ops.hpp"

namespace rsnn {

Var ann_forward(const NetworkSpec& spec, const ParamMap& params, const Bindings& vars, Var x,
                const ForwardOptions& opt) {
  return run_layers(spec, params, vars, x, opt, [](int, int, Var pre) { return ops::relu(pre); });
}

Tensor ann_logits(const Model& model, const Tensor& x, int batch) {
  const int n = x.dim(0);
  Tensor out({n, model.spec.classes});
  for (int b = 0; b < n; b += batch) {
    const int e = std::min(n, b + batch);
    Tape tape;
    const Bindings vars = bind_constants(tape, model.params);
    const Tensor logits = ann_forward(model.spec, model.params, vars, tape.constant(x.slice_rows(b, e))).value();
    std::copy(logits.ptr(), logits.ptr() + logits.size(), out.ptr() + static_cast<std::size_t>(b) * model.spec.classes);
  }
  return out;
}

Classifier ann_classifier(const Model& model) {
  const Model* m = &model;
  Classifier c;
  c.logits = [m](Tape& tape, Var x) {
    return ann_forward(m->spec, m->params, bind_constants(tape, m->params), x);
  };
  c.predict_logits = [m](const Tensor& x) { return ann_logits(*m, x); };
  return c;
}

Var trades_loss(Var logits_clean, Var logits_adv, std::span<const int> y, float lambda) {
  if (!(lambda >= 0.0f)) throw std::invalid_argument("trades lambda must be >= 0");
  if (logits_clean.shape() != logits_adv.shape()) throw ShapeError("trades_loss: logits shape mismatch");
  Var ce = ops::cross_entropy(logits_clean, y);
  if (lambda == 0.0f) return ce;
  return ops::add(ce, ops::scale(ops::kl_divergence(logits_adv, logits_clean), lambda));
}

double evaluate_accuracy(const Classifier& c, const Dataset& data, int batch) {
  std::size_t ok = 0;
  const int n = static_cast<int>(data.size());
  for (int b = 0; b < n; b += batch) {
    const int e = std::min(n, b + batch);
    const std::vector<int> pred = predict_labels(c, data.images.slice_rows(b, e));
    for (int i = b; i < e; ++i) ok += pred[static_cast<std::size_t>(i - b)] == data.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return n ? static_cast<double>(ok) / n : 0.0;
}

TrainRecord pretrain_robust_ann(Model& model, const Dataset& train, const Dataset* test,
                                const TrainConfig& cfg) {
  if (!(cfg.sgd.lr > 0.0f)) throw std::invalid_argument("learning rate must be > 0");
  if (!(cfg.lambda >= 0.0f)) throw std::invalid_argument("trades lambda must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const bool trades = cfg.loss == LossKind::trades;
  if (trades) cfg.inner.validate();
  TrainRecord rec;
  Sgd opt(cfg.sgd);
  const SparsityMask* mask = model.mask ? &*model.mask : nullptr;
  model.apply_mask();
  const Rng root(cfg.seed, 0x7472);
  const std::size_t n = train.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = cfg.sgd.cosine ? cosine_lr(cfg.sgd.lr, epoch, cfg.epochs) : cfg.sgd.lr;
    Rng erng = root.fork(static_cast<std::uint64_t>(epoch));
    const std::vector<std::size_t> order = erng.permutation(n);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0, batches = 0;
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::span<const std::size_t> rows(order.data() + b, std::min(n - b, static_cast<std::size_t>(cfg.batch_size)));
      const Tensor x = train.batch_images(rows);
      const std::vector<int> y = train.batch_labels(rows);
      Tensor x_adv;
      if (trades) {
        const Classifier c = ann_classifier(model);
        const Tensor clean = c.predict_logits(x);
        Rng arng = erng.fork(b + 1);
        const Tensor noise = attack_noise(x.shape(), arng);
        x_adv = run_attack(c, x, kl_objective(clean), cfg.inner, &noise);
      }
      Tape tape;
      const Bindings vars = bind_parameters(tape, model.params, [](const std::string&) { return true; });
      StatsLog stats;
      ForwardOptions fo;
      fo.train = true;
      fo.stats = &stats;
      Var logits = ann_forward(model.spec, model.params, vars, tape.constant(x), fo);
      Var loss;
      if (trades) {
        StatsLog adv_stats;
        ForwardOptions fa = fo;
        fa.stats = &adv_stats;
        Var logits_adv = ann_forward(model.spec, model.params, vars, tape.constant(x_adv), fa);
        loss = trades_loss(logits, logits_adv, y, cfg.lambda);
        update_running_stats(model.spec, model.params, stats);
        update_running_stats(model.spec, model.params, adv_stats);
      } else {
        loss = ops::cross_entropy(logits, y);
        update_running_stats(model.spec, model.params, stats);
      }
      const float lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw TrainingDiverged("loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batches) + " (lr " + std::to_string(lr) + ")");
      }
      tape.backward(loss);
      std::map<std::string, Tensor> grads;
      for (const auto& [name, v] : vars) grads[name] = tape.grad(v);
      opt.step(model.params, grads, lr, mask);
      const std::vector<int> pred = ops::argmax_rows(logits.value());
      for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i] ? 1 : 0;
      seen += y.size();
      loss_sum += lv;
      ++batches;
    }
    EpochRecord er{epoch, lr, batches ? loss_sum / static_cast<double>(batches) : 0.0,
                   seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0};
    if (cfg.verbose) {
      std::fprintf(stderr, "epoch %d lr %.4g loss %.4f train_acc %.4f\n", epoch, lr, er.loss, er.train_acc);
    }
    rec.epochs.push_back(er);
  }
  const Classifier c = ann_classifier(model);
  rec.train_acc = evaluate_accuracy(c, train);
  if (test) rec.test_acc = evaluate_accuracy(c, *test);
  return rec;
}

}  // namespace rsnn
