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

#include "rsnn/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rsnn {
namespace {

const std::set<std::string> kCommon = {"dataset",       "data_seed",    "train_size",   "test_size",
                                       "blob_classes",  "blob_dim",     "blob_spread",  "train_images",
                                       "train_labels",  "test_images",  "test_labels",  "train_manifest",
                                       "test_manifest", "seed",         "verbose",      "input"};
const std::set<std::string> kTrain = {"epochs",    "batch_size", "lr",          "momentum",    "weight_decay",
                                      "cosine",    "loss",       "lambda",      "attack_eps",  "attack_steps",
                                      "attack_alpha"};

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

std::set<std::string> known_keys(const std::string& command) {
  std::set<std::string> k = kCommon;
  auto add = [&](std::initializer_list<const char*> keys) {
    for (const char* s : keys) k.insert(s);
  };
  if (command == "pretrain") {
    k.insert(kTrain.begin(), kTrain.end());
    add({"architecture"});
  } else if (command == "prune") {
    k.insert(kTrain.begin(), kTrain.end());
    add({"kappa", "method", "finetune_epochs", "score_epochs", "score_lr", "quota_lr", "quota_penalty"});
  } else if (command == "convert") {
    add({"timesteps", "calib_timesteps", "percentile", "threshold_scale", "calib_batches", "calib_batch_size",
         "pooled", "refresh_stats", "tau"});
  } else if (command == "finetune") {
    add({"epochs", "batch_size", "beta", "eps", "alpha_r", "lr", "momentum", "weight_decay", "cosine", "timesteps",
         "tau", "surrogate", "threshold_floor", "probe_eps", "probe_samples"});
  } else if (command == "evaluate") {
    add({"attacks", "eps", "pgd_steps", "pgd_alpha", "samples", "ensemble", "stop_at_first_success", "timesteps",
         "tau"});
  } else if (command == "energy") {
    add({"reference", "samples", "timesteps", "tau", "e_ac"});
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return k;
}

std::set<std::string> required_keys(const std::string& command) {
  if (command == "pretrain") return {"dataset", "architecture", "epochs"};
  if (command == "prune") return {"dataset", "input", "kappa", "method"};
  if (command == "convert") return {"dataset", "input"};
  if (command == "finetune") return {"dataset", "input", "epochs"};
  if (command == "evaluate") return {"dataset", "input", "attacks", "eps"};
  if (command == "energy") return {"dataset", "input"};
  throw ConfigError("unknown command '" + command + "'");
}

DatasetPair load_data(const Config& cfg) {
  const std::string kind = cfg.get("dataset");
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int_or("data_seed", 0));
  DatasetPair d;
  if (kind == "glyphs") {
    d.train = make_glyphs(splitmix64(seed) ^ 0x1, static_cast<std::size_t>(cfg.get_int_or("train_size", 4000)));
    d.test = make_glyphs(splitmix64(seed) ^ 0x2, static_cast<std::size_t>(cfg.get_int_or("test_size", 1000)));
  } else if (kind == "blobs") {
    const std::size_t ntr = static_cast<std::size_t>(cfg.get_int_or("train_size", 512));
    const std::size_t nte = static_cast<std::size_t>(cfg.get_int_or("test_size", 256));
    const Dataset all = make_blobs(seed, ntr + nte, static_cast<int>(cfg.get_int_or("blob_classes", 2)),
                                   static_cast<int>(cfg.get_int_or("blob_dim", 2)),
                                   static_cast<float>(cfg.get_double_or("blob_spread", 0.05)));
    d.train = all.head(ntr);
    d.test.classes = all.classes;
    d.test.images = all.images.slice_rows(static_cast<int>(ntr), static_cast<int>(ntr + nte));
    d.test.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(ntr), all.labels.end());
  } else if (kind == "idx") {
    d.train = load_idx(cfg.get("train_images"), cfg.get("train_labels"));
    d.test = load_idx(cfg.get("test_images"), cfg.get("test_labels"));
  } else if (kind == "raw") {
    d.train = load_raw(cfg.get("train_manifest"));
    d.test = load_raw(cfg.get("test_manifest"));
  } else {
    throw ConfigError("unknown dataset '" + kind + "' (glyphs, blobs, idx, raw)");
  }
  d.train.validate();
  d.test.validate();
  return d;
}

TrainConfig train_config(const Config& cfg, const std::string& epochs_key) {
  TrainConfig t;
  t.epochs = static_cast<int>(cfg.get_int_or(epochs_key, t.epochs));
  t.batch_size = static_cast<int>(cfg.get_int_or("batch_size", t.batch_size));
  t.sgd.lr = static_cast<float>(cfg.get_double_or("lr", t.sgd.lr));
  t.sgd.momentum = static_cast<float>(cfg.get_double_or("momentum", t.sgd.momentum));
  t.sgd.weight_decay = static_cast<float>(cfg.get_double_or("weight_decay", t.sgd.weight_decay));
  t.sgd.cosine = cfg.get_bool_or("cosine", t.sgd.cosine);
  const std::string loss = cfg.get_or("loss", "trades");
  if (loss == "ce") {
    t.loss = LossKind::ce;
  } else if (loss == "trades") {
    t.loss = LossKind::trades;
  } else {
    throw ConfigError("loss must be ce or trades, got '" + loss + "'");
  }
  t.lambda = static_cast<float>(cfg.get_double_or("lambda", t.lambda));
  t.inner.eps = static_cast<float>(cfg.get_double_or("attack_eps", t.inner.eps));
  t.inner.steps = static_cast<int>(cfg.get_int_or("attack_steps", t.inner.steps));
  t.inner.alpha = static_cast<float>(cfg.get_double_or("attack_alpha", 0.0));
  t.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  t.verbose = cfg.get_bool_or("verbose", false);
  return t;
}

ConversionConfig conversion_config(const Config& cfg) {
  ConversionConfig c;
  c.timesteps = static_cast<int>(cfg.get_int_or("timesteps", c.timesteps));
  c.calib_timesteps = static_cast<int>(cfg.get_int_or("calib_timesteps", c.calib_timesteps));
  c.percentile = cfg.get_double_or("percentile", c.percentile);
  c.lambda = static_cast<float>(cfg.get_double_or("threshold_scale", c.lambda));
  c.batches = static_cast<int>(cfg.get_int_or("calib_batches", c.batches));
  c.batch_size = static_cast<int>(cfg.get_int_or("calib_batch_size", c.batch_size));
  c.pooled = cfg.get_bool_or("pooled", false);
  c.refresh_stats = cfg.get_bool_or("refresh_stats", true);
  c.tau = static_cast<float>(cfg.get_double_or("tau", c.tau));
  c.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  return c;
}

FinetuneConfig finetune_config(const Config& cfg) {
  FinetuneConfig f;
  f.epochs = static_cast<int>(cfg.get_int_or("epochs", f.epochs));
  f.batch_size = static_cast<int>(cfg.get_int_or("batch_size", f.batch_size));
  f.beta = static_cast<float>(cfg.get_double_or("beta", f.beta));
  f.eps = static_cast<float>(cfg.get_double_or("eps", f.eps));
  f.alpha_r = static_cast<float>(cfg.get_double_or("alpha_r", f.alpha_r));
  f.sgd.lr = static_cast<float>(cfg.get_double_or("lr", f.sgd.lr));
  f.sgd.momentum = static_cast<float>(cfg.get_double_or("momentum", f.sgd.momentum));
  f.sgd.weight_decay = static_cast<float>(cfg.get_double_or("weight_decay", f.sgd.weight_decay));
  f.sgd.cosine = cfg.get_bool_or("cosine", f.sgd.cosine);
  f.timesteps = static_cast<int>(cfg.get_int_or("timesteps", f.timesteps));
  f.tau = static_cast<float>(cfg.get_double_or("tau", f.tau));
  if (cfg.has("surrogate")) f.surrogate = parse_surrogate(cfg.get("surrogate"));
  f.threshold_floor = static_cast<float>(cfg.get_double_or("threshold_floor", f.threshold_floor));
  f.probe_eps = static_cast<float>(cfg.get_double_or("probe_eps", f.probe_eps));
  f.probe_samples = static_cast<int>(cfg.get_int_or("probe_samples", f.probe_samples));
  f.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  f.verbose = cfg.get_bool_or("verbose", false);
  return f;
}

EvalConfig eval_config(const Config& cfg) {
  EvalConfig e;
  e.attacks.clear();
  for (const std::string& a : split_list(cfg.get("attacks"), ',')) e.attacks.push_back(parse_attack_kind(a));
  e.eps.clear();
  for (const std::string& s : split_list(cfg.get("eps"), ',')) {
    Config one;
    one.set("eps", s);
    e.eps.push_back(static_cast<float>(one.get_double("eps")));
  }
  e.pgd_steps = static_cast<int>(cfg.get_int_or("pgd_steps", e.pgd_steps));
  e.pgd_alpha = static_cast<float>(cfg.get_double_or("pgd_alpha", 0.0));
  e.samples = static_cast<std::size_t>(cfg.get_int_or("samples", 0));
  if (cfg.has("ensemble")) {
    EnsembleSpec ens;
    const std::string v = cfg.get("ensemble");
    if (v == "default") {
      ens = EnsembleSpec::defaults();
    } else {
      for (const std::string& m : split_list(v, ';')) ens.members.push_back(parse_surrogate(m));
    }
    e.ensemble = ens;
  }
  e.stop_at_first_success = cfg.get_bool_or("stop_at_first_success", true);
  e.timesteps = static_cast<int>(cfg.get_int_or("timesteps", 0));
  e.tau = static_cast<float>(cfg.get_double_or("tau", 0.0));
  e.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  return e;
}

int model_timesteps(const Model& m, int fallback) {
  auto it = m.metadata.find("timesteps");
  return it == m.metadata.end() ? fallback : std::stoi(it->second);
}

float model_tau(const Model& m, float fallback) {
  auto it = m.metadata.find("tau");
  return it == m.metadata.end() ? fallback : std::stof(it->second);
}

EvalReport evaluate_model(const Model& model, const Dataset& test, const EvalConfig& cfg) {
  const bool snn = model.is_snn();
  if (!snn && cfg.ensemble) throw std::invalid_argument("surrogate ensembles apply to SNN checkpoints only");
  const Dataset data = cfg.samples ? test.head(cfg.samples) : test;
  const int T = cfg.timesteps > 0 ? cfg.timesteps : model_timesteps(model);
  const float tau = cfg.tau > 0.0f ? cfg.tau : model_tau(model);
  const EnsembleSpec ens = [&] {
    EnsembleSpec e = cfg.ensemble ? *cfg.ensemble : EnsembleSpec::defaults();
    e.stop_at_first_success = cfg.stop_at_first_success;
    return e;
  }();
  EvalReport rep;
  rep.model_kind = snn ? "snn" : "ann";
  rep.samples = data.size();
  const Classifier plain = snn ? snn_classifier(model, T, tau, SurrogateSpec::pcw(1.0f)) : ann_classifier(model);
  const int n = static_cast<int>(data.size());
  {
    std::size_t ok = 0;
    for (int b = 0; b < n; b += cfg.batch) {
      const int e = std::min(n, b + cfg.batch);
      const std::vector<int> pred = predict_labels(plain, data.images.slice_rows(b, e));
      for (int i = b; i < e; ++i) ok += pred[static_cast<std::size_t>(i - b)] == data.labels[static_cast<std::size_t>(i)];
    }
    rep.clean_acc = n ? static_cast<double>(ok) / n : 0.0;
  }
  const ClassifierFactory factory = [&](const SurrogateSpec& s) { return snn_classifier(model, T, tau, s); };
  for (AttackKind kind : cfg.attacks) {
    for (float eps : cfg.eps) {
      AttackSpec spec;
      spec.kind = kind;
      spec.eps = eps;
      spec.steps = kind == AttackKind::pgd ? cfg.pgd_steps : 1;
      spec.alpha = cfg.pgd_alpha;
      std::size_t robust = 0;
      for (int b = 0; b < n; b += cfg.batch) {
        const int e = std::min(n, b + cfg.batch);
        const Tensor x = data.images.slice_rows(b, e);
        const std::vector<int> y(data.labels.begin() + b, data.labels.begin() + e);
        const std::uint64_t seed = splitmix64(cfg.seed ^ (static_cast<std::uint64_t>(b) << 20) ^
                                              static_cast<std::uint64_t>(kind) << 8);
        if (snn) {
          const EnsembleResult r = ensemble_attack(factory, x, y, spec, ens, seed);
          for (bool f : r.fooled) robust += f ? 0 : 1;
        } else {
          Rng rng(seed);
          const Tensor noise = attack_noise(x.shape(), rng);
          const Tensor adv = run_attack(plain, x, ce_objective(y), spec, &noise);
          const std::vector<int> pred = predict_labels(plain, adv);
          for (std::size_t i = 0; i < y.size(); ++i) robust += pred[i] == y[i] ? 1 : 0;
        }
      }
      rep.rows.push_back({std::string(to_string(kind)) + (snn ? "_ens" : ""), eps, spec.steps,
                          n ? static_cast<double>(robust) / n : 0.0});
    }
  }
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["model_kind"] = model_kind;
  j["samples"] = samples;
  j["clean_acc"] = clean_acc;
  j["rows"] = nlohmann::json::array();
  for (const EvalRow& r : rows) {
    j["rows"].push_back({{"attack", r.attack}, {"eps", r.eps}, {"steps", r.steps}, {"robust_acc", r.robust_acc}});
  }
  return j.dump(2);
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json() << '\n';
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "attack,eps,steps,robust_acc,clean_acc,samples\n";
  char line[160];
  for (const EvalRow& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.6g,%d,%.4f,%.4f,%zu\n", r.attack.c_str(), r.eps, r.steps, r.robust_acc,
                  clean_acc, samples);
    out << line;
  }
}

Model run_pretrain(const Config& cfg, const DatasetPair& data, TrainRecord* record) {
  const Shape in = data.train.sample_shape();
  Model m;
  m.spec = parse_architecture(cfg.get("architecture"), in, data.train.classes);
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  Rng init(seed, 0x696e6974);
  m.params = init_parameters(m.spec, init);
  const TrainConfig tc = train_config(cfg);
  const TrainRecord rec = pretrain_robust_ann(m, data.train, &data.test, tc);
  m.metadata["kind"] = "ann";
  m.metadata["stage"] = "pretrain";
  m.metadata["seed"] = std::to_string(seed);
  m.metadata["train.loss"] = tc.loss == LossKind::trades ? "trades" : "ce";
  m.metadata["train.epochs"] = std::to_string(tc.epochs);
  m.metadata["train.lambda"] = num(tc.lambda);
  m.metadata["train.attack_eps"] = num(tc.inner.eps);
  m.metadata["train.train_acc"] = num(rec.train_acc);
  m.metadata["train.test_acc"] = num(rec.test_acc);
  if (record) *record = rec;
  return m;
}

Model run_prune(const Config& cfg, const Model& ann, const DatasetPair& data, TrainRecord* record) {
  if (ann.is_snn()) throw std::invalid_argument("prune expects an ANN checkpoint");
  const double kappa = cfg.get_double("kappa");
  const std::string method = cfg.get("method");
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  TrainConfig tc = train_config(cfg, "finetune_epochs");
  if (!cfg.has("lr")) tc.sgd.lr = 0.01f;
  SparsityMask mask;
  if (method == "lwm") {
    mask = mask_from_scores(lwm_scores(ann.params), kappa, Granularity::uniform);
  } else if (method == "uniform" || method == "nonuniform") {
    const Granularity g = method == "uniform" ? Granularity::uniform : Granularity::nonuniform;
    ScoreConfig sc;
    sc.epochs = static_cast<int>(cfg.get_int_or("score_epochs", sc.epochs));
    sc.batch_size = tc.batch_size;
    sc.sgd.lr = static_cast<float>(cfg.get_double_or("score_lr", sc.sgd.lr));
    sc.robust = tc.loss == LossKind::trades;
    sc.lambda = tc.lambda;
    sc.inner = tc.inner;
    sc.quota_lr = static_cast<float>(cfg.get_double_or("quota_lr", sc.quota_lr));
    sc.quota_penalty = static_cast<float>(cfg.get_double_or("quota_penalty", sc.quota_penalty));
    sc.seed = seed;
    const ImportanceScores s = optimize_scores(ann, data.train, kappa, sc, g);
    MaskOptions mo;
    mo.quotas = g == Granularity::nonuniform ? &s.quotas : nullptr;
    mask = mask_from_scores(s.scores, kappa, g, mo);
  } else {
    throw ConfigError("method must be lwm, uniform or nonuniform, got '" + method + "'");
  }
  Model out = ann;
  const TrainRecord rec = finetune_sparse_ann(out, mask, data.train, &data.test, tc);
  out.metadata["stage"] = "prune";
  out.metadata["prune.method"] = method;
  out.metadata["prune.kappa"] = num(kappa);
  out.metadata["prune.sparsity"] = num(mask.sparsity());
  for (const auto& [name, m] : mask.layers) {
    out.metadata["prune.sparsity." + name] = num(1.0 - static_cast<double>(m.nnz()) / static_cast<double>(m.size()));
  }
  out.metadata["prune.train_acc"] = num(rec.train_acc);
  out.metadata["prune.test_acc"] = num(rec.test_acc);
  if (record) *record = rec;
  return out;
}

Model run_convert(const Config& cfg, const Model& ann, const DatasetPair& data) {
  const ConversionConfig cc = conversion_config(cfg);
  Model snn = convert(ann, ann.mask ? &*ann.mask : nullptr, cc, data.train);
  snn.metadata["stage"] = "convert";
  return snn;
}

Model run_finetune(const Config& cfg, const Model& snn, const DatasetPair& data, FinetuneHistory* history) {
  FinetuneConfig fc = finetune_config(cfg);
  if (!cfg.has("timesteps")) fc.timesteps = model_timesteps(snn, fc.timesteps);
  if (!cfg.has("tau")) fc.tau = model_tau(snn, fc.tau);
  Model out = snn;
  const FinetuneHistory h = finetune_snn(out, data.train, &data.test, fc);
  out.metadata["stage"] = "finetune";
  out.metadata["finetune.epochs"] = std::to_string(fc.epochs);
  out.metadata["finetune.beta"] = num(fc.beta);
  out.metadata["finetune.eps"] = num(fc.eps);
  out.metadata["finetune.surrogate"] = fc.surrogate.name();
  out.metadata["timesteps"] = std::to_string(fc.timesteps);
  out.metadata["tau"] = num(fc.tau);
  if (history) *history = h;
  return out;
}

EnergyReport run_energy(const Config& cfg, const Model& snn, const Model* reference, const DatasetPair& data) {
  if (!snn.is_snn()) throw std::invalid_argument("energy expects an SNN checkpoint");
  const int T = static_cast<int>(cfg.get_int_or("timesteps", model_timesteps(snn)));
  const float tau = static_cast<float>(cfg.get_double_or("tau", model_tau(snn)));
  const std::size_t cap = static_cast<std::size_t>(cfg.get_int_or("samples", 0));
  const double e_ac = cfg.get_double_or("e_ac", 1.0);
  EnergyReport r = measure_energy(snn, data.test, cap, T, tau, e_ac);
  if (reference) {
    const EnergyReport ref = measure_energy(*reference, data.test, cap, T, tau, e_ac);
    compare_to(r, ref, cfg.get_or("reference", "reference"));
  } else {
    compare_to(r, r, "self");
  }
  return r;
}

}  // namespace rsnn
