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

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bptt_oracle.hpp"
#include "json.hpp"
#include "rsnn/checkpoint.hpp"
#include "rsnn/kernels.hpp"
#include "rsnn/optim.hpp"
#include "rsnn/pipeline.hpp"
#include "support.hpp"

using namespace rsnn;
namespace T = rsnn::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char b[64];
  std::snprintf(b, sizeof(b), "%.*f", digits, v);
  return b;
}

// ---------------------------------------------------------------- criterion 1

struct GradCase {
  std::string name;
  T::GraphFn f;
  std::vector<Tensor> inputs;
  double h = 5e-3;
};

std::vector<GradCase> grad_cases() {
  Rng rng(101);
  auto u = [&](Shape s, float lo = -1, float hi = 1) { return rng.uniform_tensor(std::move(s), lo, hi); };
  Tensor away = u({5, 4}, 0.1f, 1.0f);
  for (std::size_t i = 0; i < away.size(); i += 2) away[i] = -away[i];
  const Tensor c = u({3, 4}, -2, 2);
  const Tensor rm = u({3}, -0.2f, 0.2f), rv = u({3}, 0.5f, 2.0f);
  const std::vector<int> y{0, 2, 1, 2};
  std::vector<GradCase> v;
  v.push_back({"add", [](Tape&, auto& a) { return ops::add(a[0], a[1]); }, {u({3, 4}), u({3, 4})}});
  v.push_back({"sub", [](Tape&, auto& a) { return ops::sub(a[0], a[1]); }, {u({3, 4}), u({3, 4})}});
  v.push_back({"mul", [](Tape&, auto& a) { return ops::mul(a[0], a[1]); }, {u({3, 4}), u({3, 4})}});
  v.push_back({"scale", [](Tape&, auto& a) { return ops::scale(a[0], 1.3f); }, {u({3, 4})}});
  v.push_back({"mul_const", [c](Tape&, auto& a) { return ops::mul_const(a[0], c); }, {u({3, 4})}});
  v.push_back({"sum", [](Tape&, auto& a) { return ops::sum(a[0]); }, {u({3, 4})}});
  v.push_back({"mean", [](Tape&, auto& a) { return ops::mean(a[0]); }, {u({3, 4})}});
  v.push_back({"relu", [](Tape&, auto& a) { return ops::relu(a[0]); }, {away}});
  v.push_back({"reshape", [](Tape&, auto& a) { return ops::reshape(a[0], {2, 6}); }, {u({3, 4})}});
  v.push_back({"matmul", [](Tape&, auto& a) { return ops::matmul(a[0], a[1]); }, {u({3, 5}), u({5, 2})}});
  v.push_back({"linear", [](Tape&, auto& a) { return ops::linear(a[0], a[1], a[2]); }, {u({4, 6}), u({3, 6}), u({3})}});
  v.push_back({"conv2d", [](Tape&, auto& a) { return ops::conv2d(a[0], a[1], a[2], 1, 1); },
               {u({2, 2, 5, 5}), u({3, 2, 3, 3}), u({3})}});
  v.push_back({"conv2d_strided", [](Tape&, auto& a) { return ops::conv2d(a[0], a[1], std::nullopt, 2, 0); },
               {u({2, 2, 5, 5}), u({3, 2, 3, 3})}});
  v.push_back({"avgpool2d", [](Tape&, auto& a) { return ops::avgpool2d(a[0], 2); }, {u({2, 3, 4, 4})}});
  for (bool train : {true, false}) {
    ops::BatchNormOptions o;
    o.train = train;
    v.push_back({std::string("batch_norm_") + (train ? "train" : "eval"),
                 [=](Tape&, auto& a) { return ops::batch_norm(a[0], a[1], a[2], rm, rv, o); },
                 {u({4, 3, 2, 2}), u({3}, 0.5f, 1.5f), u({3}, -0.5f, 0.5f)}});
  }
  v.push_back({"sum_over_time", [](Tape&, auto& a) { return ops::sum_over_time(a[0], 3); }, {u({6, 4})}});
  v.push_back({"repeat_time", [](Tape&, auto& a) { return ops::repeat_time(a[0], 3); }, {u({2, 4})}});
  v.push_back({"cross_entropy", [y](Tape&, auto& a) { return ops::cross_entropy(a[0], y); }, {u({4, 3}, -2, 2)}});
  v.push_back({"kl_divergence", [](Tape&, auto& a) { return ops::kl_divergence(a[0], a[1]); },
               {u({4, 3}, -2, 2), u({4, 3}, -2, 2)}});
  Tensor mask({3, 4});
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 ? 1.0f : 0.0f;
  const Tensor scores = u({3, 4}, 0, 1);
  v.push_back({"masked_weight",
               [mask, scores](Tape& t, auto& a) { return ops::masked_weight_ste(a[0], t.constant(scores), mask); },
               {u({3, 4})}});

  // the whole trades objective of a small conv net, in every trainable tensor
  static const Model m = T::make_model("conv:3:3:1:1,bn,relu,pool:2,flatten,linear:5,bn,relu,linear:3:bias",
                                       {1, 4, 4}, 3, 21);
  const Tensor x = u({4, 1, 4, 4}, 0, 1), xa = u({4, 1, 4, 4}, 0, 1);
  std::vector<std::string> names;
  std::vector<Tensor> params;
  for (const auto& [name, t] : m.params) {
    if (is_buffer(name)) continue;
    names.push_back(name);
    params.push_back(t);
  }
  v.push_back({"ann_trades_loss",
               [=](Tape& tape, auto& a) {
                 Bindings b;
                 for (std::size_t i = 0; i < a.size(); ++i) b[names[i]] = a[i];
                 ForwardOptions opt;
                 opt.train = true;
                 Var lc = ann_forward(m.spec, m.params, b, tape.constant(x), opt);
                 Var la = ann_forward(m.spec, m.params, b, tape.constant(xa), opt);
                 return trades_loss(lc, la, std::vector<int>{0, 1, 2, 1}, 2.0f);
               },
               params, 1e-3});
  return v;
}

Outcome criterion1() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (const GradCase& g : grad_cases()) {
    const double e = T::grad_rel_error(g.f, g.inputs, g.h);
    if (e > worst) {
      worst = e;
      worst_name = g.name;
    }
    o.require(e < 1e-3, g.name + " rel error " + fmt(e, 6));
  }
  double worst_bptt = 0.0;
  const T::LifFixture f;
  for (const SurrogateSpec& s : T::bptt_families()) {
    const double e = T::lif_bptt_error(f, s);
    worst_bptt = std::max(worst_bptt, e);
    o.require(e < 1e-6, "bptt " + s.name() + " error " + std::to_string(e));
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + fmt(secs, 1) + " s");
  o.detail << "max finite-difference rel error " << fmt(worst, 6) << " (" << worst_name << "), max BPTT deviation "
           << worst_bptt << ", " << fmt(secs, 2) << " s";
  return o;
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2() {
  Outcome o;
  struct Trace {
    std::vector<float> currents;
    float vth, tau;
    std::vector<float> spikes, v;
  };
  const std::vector<Trace> traces = {
      {{0.25f, 0.25f, 0.25f, 0.25f, 0.25f}, 1.0f, 1.0f, {0, 0, 0, 1, 0}, {0.25f, 0.5f, 0.75f, 0.0f, 0.25f}},
      {{1.0f, 1.0f, 1.0f, 1.0f}, 1.75f, 0.5f, {0, 0, 1, 0}, {1.0f, 1.5f, 0.0f, 1.0f}},
      {{-1.0f, 2.0f, 5.0f}, 0.5f, 1.0f, {0, 1, 1}, {-1.0f, 0.0f, 0.0f}},
      {{0.5f}, std::nextafter(0.5f, 1.0f), 1.0f, {0}, {0.5f}},
      {{0.5f, 0.5f}, 0.5f, 0.0f, {1, 1}, {0.0f, 0.0f}},
  };
  int n = 0;
  for (const Trace& t : traces) {
    Tensor v = Tensor::zeros({1});
    std::vector<float> spikes, vs;
    for (float i : t.currents) {
      const LifResult r = lif_step(v, Tensor::scalar(i), t.vth, t.tau);
      spikes.push_back(r.spikes[0]);
      v = r.v_next;
      vs.push_back(v[0]);
    }
    o.require(spikes == t.spikes && vs == t.v, "trace " + std::to_string(n));
    ++n;
  }
  // the layer form over time must agree with the scalar step
  Tape tape;
  Tensor cur({5, 1});
  for (int i = 0; i < 5; ++i) cur[static_cast<std::size_t>(i)] = 0.25f;
  const Tensor s = lif_layer(tape.constant(cur), tape.constant(Tensor::scalar(1.0f)), 5, 1.0f, SurrogateSpec::pcw(1)).value();
  o.require(s == Tensor::from({5, 1}, {0, 0, 0, 1, 0}), "lif_layer trace");
  o.detail << n << " scalar traces and the layer trace match exactly";
  return o;
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion3() {
  Outcome o;
  Rng rng(303);
  int configs = 0;
  MaskOptions opt;
  opt.allow_empty_layer = true;
  for (int trial = 0; trial < 100; ++trial) {
    ScoreMap s;
    const int layers = 1 + static_cast<int>(rng.uniform_index(4));
    for (int l = 0; l < layers; ++l) {
      Tensor t = rng.uniform_tensor({1 + static_cast<int>(rng.uniform_index(8)), 1 + static_cast<int>(rng.uniform_index(12))}, 0, 1);
      if (trial % 4 == 0)
        for (float& v : t.data()) v = std::round(v * 3.0f);
      s[param_name(2 * l, "weight")] = t;
    }
    const double kappa = rng.uniform(0.0f, 0.99f);
    const SparsityMask um = mask_from_scores(s, kappa, Granularity::uniform, opt);
    std::vector<float> all;
    std::vector<std::uint8_t> gm_bits;
    for (const auto& [name, t] : s) {
      const std::vector<float> v(t.data().begin(), t.data().end());
      all.insert(all.end(), v.begin(), v.end());
      const auto want = T::topk_oracle(v, keep_budget(kappa, v.size()));
      o.require(um.layers.at(name).bits == want, "uniform mask trial " + std::to_string(trial));
      const double achieved = 1.0 - static_cast<double>(um.layers.at(name).nnz()) / static_cast<double>(v.size());
      o.require(std::fabs(achieved - kappa) < 1.0 / static_cast<double>(v.size()) + 1e-12, "uniform sparsity");
    }
    const SparsityMask gm = mask_from_scores(s, kappa, Granularity::global, opt);
    for (const auto& [name, l] : gm.layers) gm_bits.insert(gm_bits.end(), l.bits.begin(), l.bits.end());
    o.require(gm_bits == T::topk_oracle(all, keep_budget(kappa, all.size())), "global mask trial " + std::to_string(trial));
    o.require(std::fabs(gm.sparsity() - kappa) < 1.0 / static_cast<double>(all.size()) + 1e-12, "global sparsity");
    ++configs;
  }

  // >= 1000 masked updates of both the ANN finetuner and the SNN finetuner
  const Dataset data = make_blobs(31, 256, 3, 4, 0.1f);
  auto zeros_hold = [](const Model& m, const SparsityMask& mask) {
    for (const auto& [name, l] : mask.layers) {
      const Tensor& w = m.params.at(name);
      for (std::size_t i = 0; i < l.size(); ++i)
        if (!l.bits[i] && std::bit_cast<std::uint32_t>(w[i]) != 0u) return false;
    }
    return true;
  };
  Model ann = T::make_model("linear:16,bn,relu,linear:12,bn,relu,linear:3:bias", {4}, 3, 32);
  const SparsityMask mask = mask_from_scores(lwm_scores(ann.params), 0.8, Granularity::uniform);
  TrainConfig tc;
  tc.epochs = 32;
  tc.batch_size = 8;
  tc.sgd.lr = 0.05f;
  tc.inner.steps = 1;
  finetune_sparse_ann(ann, mask, data, nullptr, tc);
  const int ann_steps = tc.epochs * 32;
  o.require(zeros_hold(ann, mask), "ANN pruned weights moved");

  ConversionConfig cc;
  cc.calib_timesteps = 16;
  cc.timesteps = 4;
  cc.batches = 2;
  cc.batch_size = 32;
  Model snn = convert(ann, &mask, cc, data);
  FinetuneConfig fc;
  fc.epochs = 32;
  fc.batch_size = 8;
  fc.eps = 0.05f;
  fc.timesteps = 4;
  fc.sgd.lr = 0.01f;
  fc.probe_samples = 0;
  finetune_snn(snn, data, nullptr, fc);
  const int snn_steps = fc.epochs * 32;
  o.require(zeros_hold(snn, mask), "SNN pruned weights moved");
  o.detail << configs << " random configurations equal the full-sort oracle; pruned weights bit-zero after "
           << ann_steps << " ANN and " << snn_steps << " SNN finetune steps";
  return o;
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion4() {
  Outcome o;
  int fixtures = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Model ann = T::tiny_conv(seed);
    const Dataset data = T::random_images(seed + 50, 48, {1, 8, 8}, 10);
    for (double rho : {99.7, 90.0, 100.0}) {
      for (bool pooled : {false, true}) {
        ConversionConfig cfg;
        cfg.calib_timesteps = 10;
        cfg.timesteps = 4;
        cfg.batches = 3;
        cfg.batch_size = 12;
        cfg.percentile = rho;
        cfg.pooled = pooled;
        cfg.lambda = 0.3f;
        cfg.seed = seed;
        // order-statistic replay
        Model ref = transfer_weights(ann);
        const auto batches = calibration_batches(data, cfg);
        std::vector<float> want;
        const std::vector<int> spiking = ref.spec.spiking_layers();
        for (std::size_t si = 0; si < spiking.size(); ++si) {
          SnnOptions so;
          so.timesteps = cfg.calib_timesteps;
          so.train = true;
          so.stop_at_spiking = static_cast<int>(si);
          float best = -1e30f;
          std::vector<float> all;
          for (const auto& rows : batches) {
            Tape tape;
            const Tensor pre = snn_forward(ref.spec, ref.params, bind_constants(tape, ref.params),
                                           tape.constant(data.batch_images(rows)), so).value();
            const std::vector<float> v(pre.data().begin(), pre.data().end());
            all.insert(all.end(), v.begin(), v.end());
            best = std::max(best, T::percentile_oracle(v, rho));
          }
          const float th = pooled ? T::percentile_oracle(all, rho) : best;
          ref.param(threshold_name(spiking[si])) = Tensor::scalar(th);
          want.push_back(th);
        }
        CalibrationLog log;
        const Model snn = convert(ann, nullptr, cfg, data, &log);
        o.require(log.thresholds == want, "calibration oracle seed " + std::to_string(seed));
        const std::vector<float> th = thresholds(snn);
        for (std::size_t l = 0; l < th.size(); ++l) {
          o.require(th[l] > 0.0f, "non-positive threshold");
          o.require(th[l] == cfg.lambda * log.thresholds[l], "lambda scaling");
        }
        for (const auto& [name, t] : ann.params) {
          if (is_buffer(name)) continue;
          o.require(std::memcmp(t.ptr(), snn.params.at(name).ptr(), t.size() * sizeof(float)) == 0,
                    "weight changed: " + name);
        }
        ++fixtures;
      }
    }
  }
  o.detail << fixtures << " fixtures: weights bit-equal, thresholds positive, scaling exact, percentiles match the "
           << "order statistic";
  return o;
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion5() {
  Outcome o;
  const Model ann = T::tiny_conv(51);
  const Model snn = T::tiny_snn(52, 0.3f);
  Tensor x = Rng(53).uniform_tensor({8, 1, 8, 8}, 0, 1);
  for (std::size_t i = 0; i < x.size(); i += 5) x[i] = i % 2 ? 1.0f : 0.0f;
  std::vector<int> y;
  for (int i = 0; i < 8; ++i) y.push_back(i % 10);
  auto inside = [&](const Tensor& a, float eps) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = std::fabs(static_cast<double>(a[i]) - x[i]);
      if (d > eps || a[i] < 0.0f || a[i] > 1.0f) return false;
    }
    return true;
  };
  int checked = 0;
  const ClassifierFactory sf = [&](const SurrogateSpec& s) { return snn_classifier(snn, 4, 1.0f, s); };
  for (float eps : {1e-3f, 2.0f / 255.0f, 8.0f / 255.0f, 0.1f, 0.5f}) {
    Rng rng(54);
    for (const Classifier& c : {ann_classifier(ann), sf(SurrogateSpec::pcw(1))}) {
      o.require(inside(fgsm(c, x, y, eps), eps), "fgsm ball");
      o.require(inside(rfgsm(c, x, y, eps, eps / 2, rng), eps), "rfgsm ball");
      o.require(inside(pgd(c, x, y, eps, 7, 2.5f * eps / 7, true, rng), eps), "pgd ball");
      checked += 3;
    }
    AttackSpec spec;
    spec.kind = AttackKind::pgd;
    spec.eps = eps;
    spec.steps = 3;
    spec.random_start = true;
    o.require(inside(ensemble_attack(sf, x, y, spec, EnsembleSpec::defaults(), 5).adversarial, eps), "ensemble ball");
    ++checked;
  }

  // singleton ensemble == plain attack with the same noise
  AttackSpec spec;
  spec.kind = AttackKind::pgd;
  spec.eps = 0.1f;
  spec.steps = 4;
  spec.random_start = true;
  const std::size_t row = x.size() / 8;
  auto member_noise = [&](const Tensor& xs, std::size_t m, std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(xs.dim(0));
    Tensor noise(xs.shape());
    for (std::size_t i = 0; i < n; ++i) {
      Rng r = Rng(seed, m + 1).fork(i);
      const Tensor u = attack_noise({1, 1, 8, 8}, r);
      std::copy(u.ptr(), u.ptr() + row, noise.ptr() + i * row);
    }
    return noise;
  };
  EnsembleSpec single;
  single.members = {SurrogateSpec::rect(1.0f)};
  const EnsembleResult er = ensemble_attack(sf, x, y, spec, single, 9);
  AttackSpec plain = spec;
  plain.surrogate = single.members[0];
  const Tensor n0 = member_noise(x, 0, 9);
  o.require(er.adversarial == run_attack(sf(single.members[0]), x, ce_objective(y), plain, &n0), "singleton ensemble");

  // union on a 100-sample fixture, against independent member attacks
  // labelled by the clean prediction, so only the attack can fool a sample
  Dataset d = T::random_images(55, 100, {1, 8, 8}, 10);
  d.labels = predict_labels(sf(SurrogateSpec::pcw(1)), d.images);
  spec.eps = 0.02f;
  spec.steps = 3;
  const EnsembleSpec ens = EnsembleSpec::defaults();
  const EnsembleResult all = ensemble_attack(sf, d.images, d.labels, spec, ens, 17);
  double min_member = 1.0;
  for (std::size_t m = 0; m < ens.members.size(); ++m) {
    AttackSpec ms = spec;
    ms.surrogate = ens.members[m];
    const Tensor noise = member_noise(d.images, m, 17);
    const Classifier c = sf(ens.members[m]);
    const std::vector<int> pred = predict_labels(c, run_attack(c, d.images, ce_objective(d.labels), ms, &noise));
    std::size_t robust = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      const bool hit = pred[i] != d.labels[i];
      o.require(all.member_fooled[m][i] == hit, "member " + ens.members[m].name() + " differs from its own attack");
      robust += hit ? 0 : 1;
    }
    min_member = std::min(min_member, robust / 100.0);
  }
  std::size_t union_size = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    bool any = false;
    for (const auto& mf : all.member_fooled) any = any || mf[i];
    o.require(all.fooled[i] == any, "union");
    union_size += any ? 1 : 0;
  }
  o.require(all.robust_accuracy() <= min_member, "ensemble robust acc above a member");
  o.detail << checked << " attack outputs inside ball and box; singleton equals plain; union of "
           << ens.members.size() << " members fools " << union_size << "/100; ensemble robust "
           << fmt(all.robust_accuracy(), 2) << " <= min member " << fmt(min_member, 2);
  return o;
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6() {
  Outcome o;
  int nets = 0;
  for (std::uint64_t seed : {61u, 62u, 63u}) {
    const Model snn = T::tiny_snn(seed, 0.2f);
    Rng mr(seed);
    SparsityMask mask;
    for (const auto& [name, t] : snn.params) {
      if (!is_prunable(name)) continue;
      LayerMask l{t.shape(), std::vector<std::uint8_t>(t.size())};
      for (auto& b : l.bits) b = mr.uniform() < 0.5f;
      mask.layers[name] = l;
    }
    SpikeTrace trace;
    snn_logits(snn, Rng(seed).uniform_tensor({6, 1, 8, 8}, 0, 1), 4, 1.0f, 128, &trace);
    for (const SparsityMask* m : std::vector<const SparsityMask*>{nullptr, &mask}) {
      const std::vector<Tensor> psi = active_fanouts(snn.spec, snn.params, m);
      std::vector<std::vector<double>> psi_o;
      for (int l = 0; l < static_cast<int>(psi.size()); ++l) {
        psi_o.push_back(T::fanout_oracle(snn.spec, snn.params, l, m));
        o.require(std::vector<double>(psi[static_cast<std::size_t>(l)].data().begin(), psi[static_cast<std::size_t>(l)].data().end()) ==
                      psi_o.back(),
                  "fanout enumeration");
      }
      o.require(estimate_energy(trace, psi, 1.0).energy == T::energy_oracle(trace, psi_o, 1.0), "energy oracle");
      ++nets;
    }
  }
  // closed forms on interior neurons
  const Model d = T::make_model("conv:4:3:1:1,relu,conv:5:3:1:1,relu,flatten,linear:7,relu,linear:3:bias", {1, 6, 6}, 3, 64);
  const Tensor conv = active_fanout(d.spec, d.params, 0);
  int interior = 0;
  for (int c = 0; c < 4; ++c)
    for (int yy = 1; yy < 5; ++yy)
      for (int xx = 1; xx < 5; ++xx) {
        o.require(conv[static_cast<std::size_t>((c * 6 + yy) * 6 + xx)] == 45.0f, "conv closed form");
        ++interior;
      }
  const Tensor lin = active_fanout(d.spec, d.params, 1);
  for (float v : lin.data()) o.require(v == 7.0f, "linear closed form");
  // monotonicity under 50 nested random masks
  const Model snn = T::tiny_snn(65);
  const std::vector<Tensor> dense = active_fanouts(snn.spec, snn.params);
  for (int trial = 0; trial < 50; ++trial) {
    Rng r(1000 + static_cast<std::uint64_t>(trial));
    SparsityMask a, b;
    for (const auto& [name, t] : snn.params) {
      if (!is_prunable(name)) continue;
      LayerMask la{t.shape(), std::vector<std::uint8_t>(t.size())}, lb = la;
      for (std::size_t i = 0; i < t.size(); ++i) {
        la.bits[i] = r.uniform() < 0.6f;
        lb.bits[i] = la.bits[i] && r.uniform() < 0.5f;
      }
      a.layers[name] = la;
      b.layers[name] = lb;
    }
    const auto pa = active_fanouts(snn.spec, snn.params, &a), pb = active_fanouts(snn.spec, snn.params, &b);
    for (std::size_t l = 0; l < pa.size(); ++l)
      for (std::size_t i = 0; i < pa[l].size(); ++i)
        o.require(pb[l][i] <= pa[l][i] && pa[l][i] <= dense[l][i], "monotonicity");
  }
  o.detail << nets << " toy nets equal the enumeration exactly; " << interior
           << " interior conv neurons and all linear inputs match the closed forms; 50 nested masks monotone";
  return o;
}

// ---------------------------------------------------------------- criterion 7

struct DeskScale {
  std::vector<int> seeds{0, 1, 2};
  int train_size = 4000;
  int test_size = 1000;
  int eval_samples = 300;
  int pretrain_epochs = 8;
  int score_epochs = 3;
  int prune_epochs = 4;
  int finetune_epochs = 4;
  double train_eps = 0.1;
  double mid_eps = 0.1;
  std::string arch = kDefaultArchitecture;
  fs::path work = "acceptance7";
};

Config base_config(const DeskScale& d, int seed) {
  Config c;
  c.set("dataset", "glyphs");
  c.set("data_seed", std::to_string(seed));
  c.set("train_size", std::to_string(d.train_size));
  c.set("test_size", std::to_string(d.test_size));
  c.set("seed", std::to_string(seed));
  return c;
}

struct SnnResult {
  double clean = 0.0;
  double pgd = -1.0;
  double fgsm = -1.0;
};

SnnResult assess(const Model& snn, const Dataset& test, const DeskScale& d, bool robust, bool fgsm, int seed) {
  SnnResult r;
  EvalConfig e;
  e.attacks.clear();
  if (robust) e.attacks.push_back(AttackKind::pgd);
  if (fgsm) e.attacks.push_back(AttackKind::fgsm);
  e.eps = {static_cast<float>(d.mid_eps)};
  e.samples = static_cast<std::size_t>(d.eval_samples);
  e.seed = static_cast<std::uint64_t>(seed);
  // clean accuracy is cheap, so it uses the whole test split; attacks use the head
  r.clean = snn_accuracy(snn, test, model_timesteps(snn), model_tau(snn));
  if (e.attacks.empty()) return r;
  const EvalReport rep = evaluate_model(snn, test, e);
  for (const EvalRow& row : rep.rows) (row.attack.starts_with("pgd") ? r.pgd : r.fgsm) = row.robust_acc;
  return r;
}

Outcome criterion7(const DeskScale& d) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(d.work);
  nlohmann::json log = nlohmann::json::array();
  double sum_ann = 0, sum_dense = 0, sum_s90 = 0, sum_s70 = 0, sum_s70r = 0, sum_dense_pgd = 0, sum_ctrl_pgd = 0,
         sum_lwm = 0, sum_fgsm = 0;
  for (int seed : d.seeds) {
    const auto ts = std::chrono::steady_clock::now();
    Config c = base_config(d, seed);
    const DatasetPair data = load_data(c);
    auto save = [&](const Model& m, const std::string& name) {
      save_checkpoint(m, d.work / ("seed" + std::to_string(seed) + "_" + name + ".ckpt"));
    };
    // robust ANN
    Config pc = c;
    pc.set("architecture", d.arch);
    pc.set("epochs", std::to_string(d.pretrain_epochs));
    pc.set("attack_eps", fmt(d.train_eps, 6));
    pc.set("attack_steps", "5");
    TrainRecord rec;
    const Model ann = run_pretrain(pc, data, &rec);
    save(ann, "ann");
    const double ann_acc = evaluate_accuracy(ann_classifier(ann), data.test);

    Config cc = c;
    cc.set("timesteps", "8");
    cc.set("calib_batches", "5");
    Config fc = c;
    fc.set("epochs", std::to_string(d.finetune_epochs));
    fc.set("eps", fmt(d.train_eps, 6));
    fc.set("lr", "0.005");
    fc.set("probe_samples", "0");
    auto to_snn = [&](const Model& a, const Config& fcfg, const std::string& name) {
      const Model s = run_finetune(fcfg, run_convert(cc, a, data), data);
      save(s, name);
      return s;
    };

    const Model dense = to_snn(ann, fc, "dense_snn");
    const SnnResult dr = assess(dense, data.test, d, true, true, seed);

    // control: no adversarial training anywhere
    Config ctl = pc;
    ctl.set("loss", "ce");
    const Model ann_ce = run_pretrain(ctl, data);
    Config fctl = fc;
    fctl.set("beta", "0");
    const Model control = to_snn(ann_ce, fctl, "control_snn");
    const SnnResult cr = assess(control, data.test, d, true, false, seed);

    auto pruned = [&](const std::string& method, double kappa, bool robust, const std::string& name) {
      Config pr = c;
      pr.set("kappa", fmt(kappa, 3));
      pr.set("method", method);
      pr.set("score_epochs", std::to_string(d.score_epochs));
      pr.set("finetune_epochs", std::to_string(d.prune_epochs));
      pr.set("attack_eps", fmt(d.train_eps, 6));
      pr.set("attack_steps", "5");
      const Model sparse_ann = run_prune(pr, ann, data);
      const Model s = to_snn(sparse_ann, fc, name);
      return assess(s, data.test, d, robust, false, seed);
    };
    const SnnResult s90 = pruned("uniform", 0.9, false, "uniform90_snn");
    const SnnResult s70 = pruned("uniform", 0.7, true, "uniform70_snn");
    const SnnResult l90 = pruned("lwm", 0.9, false, "lwm90_snn");

    sum_ann += ann_acc;
    sum_dense += dr.clean;
    sum_dense_pgd += dr.pgd;
    sum_fgsm += dr.fgsm;
    sum_ctrl_pgd += cr.pgd;
    sum_s90 += s90.clean;
    sum_s70 += s70.clean;
    sum_s70r += s70.pgd;
    sum_lwm += l90.clean;
    const double secs = seconds_since(ts);
    log.push_back({{"seed", seed},
                   {"ann_clean", ann_acc},
                   {"dense_snn_clean", dr.clean},
                   {"dense_snn_pgd_ens", dr.pgd},
                   {"dense_snn_fgsm_ens", dr.fgsm},
                   {"control_snn_clean", cr.clean},
                   {"control_snn_pgd_ens", cr.pgd},
                   {"uniform90_clean", s90.clean},
                   {"uniform70_clean", s70.clean},
                   {"uniform70_pgd_ens", s70.pgd},
                   {"lwm90_clean", l90.clean},
                   {"seconds", secs}});
    std::cout << "  seed " << seed << ": " << log.back().dump() << std::endl;
  }
  const double k = static_cast<double>(d.seeds.size());
  const double ann = sum_ann / k, dense = sum_dense / k, s90 = sum_s90 / k, s70 = sum_s70 / k, s70r = sum_s70r / k,
               dpgd = sum_dense_pgd / k, cpgd = sum_ctrl_pgd / k, lwm = sum_lwm / k, fg = sum_fgsm / k;
  const double pts = 100.0;
  std::ostringstream sub;
  auto check = [&](const std::string& tag, bool ok, const std::string& text) {
    o.require(ok, tag);
    sub << tag << (ok ? " ok" : " FAIL") << " (" << text << "); ";
  };
  check("7a", std::fabs(ann - dense) * pts <= 3.0, "ANN " + fmt(ann * pts, 1) + " vs dense SNN " + fmt(dense * pts, 1));
  check("7b", (dense - s90) * pts <= 6.0 && std::fabs(dense - s70) * pts <= 2.0 && std::fabs(dpgd - s70r) * pts <= 2.0,
        "90% " + fmt(s90 * pts, 1) + ", 70% clean " + fmt(s70 * pts, 1) + " robust " + fmt(s70r * pts, 1) +
            " vs dense " + fmt(dense * pts, 1) + "/" + fmt(dpgd * pts, 1));
  check("7c", (dpgd - cpgd) * pts >= 10.0,
        "PGD_ens at eps " + fmt(d.mid_eps, 3) + ": adversarial " + fmt(dpgd * pts, 1) + " vs control " + fmt(cpgd * pts, 1));
  check("7d", s90 > lwm, "learned " + fmt(s90 * pts, 1) + " vs LWM " + fmt(lwm * pts, 1));
  check("7e", dpgd <= fg, "PGD_ens " + fmt(dpgd * pts, 1) + " vs FGSM_ens " + fmt(fg * pts, 1));
  const double secs = seconds_since(t0);
  std::ofstream(d.work / "results.json") << nlohmann::json{{"seeds", log}, {"seconds", secs}}.dump(2) << '\n';
  o.detail << sub.str() << "means over " << d.seeds.size() << " seeds, " << fmt(secs / 60.0, 1) << " min";
  return o;
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion8() {
  Outcome o;
  Config c;
  c.set("dataset", "glyphs");
  c.set("train_size", "256");
  c.set("test_size", "64");
  c.set("seed", "7");
  const DatasetPair data = load_data(c);
  auto stage_hashes = [&] {
    std::vector<std::string> h;
    Config p = c;
    p.set("architecture", "conv:4:3:1:1,bn,relu,pool:2,flatten,linear:16,bn,relu,linear:10:bias");
    p.set("epochs", "1");
    p.set("attack_steps", "2");
    const Model ann = run_pretrain(p, data);
    h.push_back(hex64(model_hash(ann)));
    Config pr = c;
    pr.set("kappa", "0.8");
    pr.set("method", "nonuniform");
    pr.set("score_epochs", "1");
    pr.set("finetune_epochs", "1");
    pr.set("attack_steps", "2");
    const Model sparse = run_prune(pr, ann, data);
    h.push_back(hex64(model_hash(sparse)));
    Config cv = c;
    cv.set("calib_timesteps", "10");
    cv.set("timesteps", "4");
    cv.set("calib_batches", "2");
    const Model snn = run_convert(cv, sparse, data);
    h.push_back(hex64(model_hash(snn)));
    Config ft = c;
    ft.set("epochs", "1");
    ft.set("eps", "0.1");
    ft.set("probe_samples", "32");
    FinetuneHistory hist;
    const Model tuned = run_finetune(ft, snn, data, &hist);
    h.push_back(hex64(model_hash(tuned)));
    Config ev = c;
    ev.set("attacks", "fgsm,rfgsm,pgd");
    ev.set("eps", "0.1");
    ev.set("pgd_steps", "3");
    ev.set("samples", "32");
    h.push_back(hex64(fnv1a64(evaluate_model(tuned, data.test, eval_config(ev)).to_json())));
    h.push_back(hex64(fnv1a64(run_energy(c, tuned, &snn, data).to_json())));
    return h;
  };
  const std::vector<std::string> a = stage_hashes(), b = stage_hashes();
  const char* names[] = {"pretrain", "prune", "convert", "finetune", "evaluate", "energy"};
  for (std::size_t i = 0; i < a.size(); ++i) o.require(a[i] == b[i], std::string(names[i]) + " hash differs");
  o.detail << "6 stages reproduce their hashes (finetune " << a[3] << ")";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int criterion = 0;
  DeskScale desk;
  app.add_option("--criterion", criterion, "1-8; 0 runs all")->check(CLI::Range(0, 8));
  app.add_option("--work", desk.work, "artifact directory for the pipeline check");
  app.add_option("--seeds", desk.seeds, "pipeline seeds");
  app.add_option("--train-size", desk.train_size);
  app.add_option("--test-size", desk.test_size);
  app.add_option("--eval-samples", desk.eval_samples, "samples attacked per robust metric");
  app.add_option("--pretrain-epochs", desk.pretrain_epochs);
  app.add_option("--finetune-epochs", desk.finetune_epochs);
  app.add_option("--prune-epochs", desk.prune_epochs);
  app.add_option("--score-epochs", desk.score_epochs);
  app.add_option("--architecture", desk.arch);
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  for (int k = 1; k <= 8; ++k) {
    if (criterion != 0 && criterion != k) continue;
    Outcome r;
    try {
      switch (k) {
        case 1: r = criterion1(); break;
        case 2: r = criterion2(); break;
        case 3: r = criterion3(); break;
        case 4: r = criterion4(); break;
        case 5: r = criterion5(); break;
        case 6: r = criterion6(); break;
        case 7: r = criterion7(desk); break;
        case 8: r = criterion8(); break;
      }
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail << "exception: " << e.what();
    }
    std::cout << "criterion " << k << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.detail.str() << std::endl;
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}
