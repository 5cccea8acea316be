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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rsnn/checkpoint.hpp"
#include "rsnn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rsnn;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::string input;
  std::string out;
  int threads = 1;
};

Config assemble(const std::string& command, const Options& o) {
  Config cfg = o.config.empty() ? Config{} : Config::load(o.config);
  const std::set<std::string> known = known_keys(command);
  cfg.apply_env(known);
  for (const std::string& s : o.sets) cfg.set_assignment(s);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (!o.input.empty()) cfg.set("input", o.input);
  cfg.check_known(known);
  cfg.require(required_keys(command));
  return cfg;
}

fs::path sibling(const fs::path& out, const std::string& ext) {
  fs::path p = out;
  p.replace_extension(ext);
  return p;
}

void write_train_csv(const TrainRecord& r, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "epoch,lr,loss,train_acc\n";
  char line[128];
  for (const EpochRecord& e : r.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.6g,%.6f,%.4f\n", e.epoch, e.lr, e.loss, e.train_acc);
    f << line;
  }
}

void report(const Model& m, const fs::path& out) {
  save_checkpoint(m, out);
  std::cout << "wrote " << out.string() << " hash " << hex64(model_hash(m)) << '\n';
}

int run(const std::string& command, const Options& o) {
  if (o.threads != 1) std::cerr << "note: kernels are single-threaded; --threads " << o.threads << " ignored\n";
  const Config cfg = assemble(command, o);
  const DatasetPair data = load_data(cfg);
  const fs::path out = o.out.empty() ? fs::path(command + (command == "evaluate" || command == "energy" ? ".json" : ".ckpt"))
                                     : fs::path(o.out);
  if (command == "pretrain") {
    TrainRecord rec;
    const Model m = run_pretrain(cfg, data, &rec);
    write_train_csv(rec, sibling(out, ".csv"));
    std::printf("train_acc %.4f test_acc %.4f\n", rec.train_acc, rec.test_acc);
    report(m, out);
  } else if (command == "prune") {
    TrainRecord rec;
    const Model m = run_prune(cfg, load_checkpoint(cfg.get("input")), data, &rec);
    write_train_csv(rec, sibling(out, ".csv"));
    std::printf("sparsity %s test_acc %.4f\n", m.metadata.at("prune.sparsity").c_str(), rec.test_acc);
    report(m, out);
  } else if (command == "convert") {
    const Model m = run_convert(cfg, load_checkpoint(cfg.get("input")), data);
    report(m, out);
  } else if (command == "finetune") {
    FinetuneHistory h;
    const Model m = run_finetune(cfg, load_checkpoint(cfg.get("input")), data, &h);
    h.write_csv(sibling(out, ".csv"));
    report(m, out);
  } else if (command == "evaluate") {
    const EvalReport r = evaluate_model(load_checkpoint(cfg.get("input")), data.test, eval_config(cfg));
    r.write_json(out);
    r.write_csv(sibling(out, ".csv"));
    std::cout << r.to_json() << '\n';
  } else if (command == "energy") {
    const Model snn = load_checkpoint(cfg.get("input"));
    std::optional<Model> ref;
    if (cfg.has("reference")) ref = load_checkpoint(cfg.get("reference"));
    const EnergyReport r = run_energy(cfg, snn, ref ? &*ref : nullptr, data);
    r.write_json(out);
    r.write_csv(sibling(out, ".csv"));
    std::cout << r.to_json() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rsnn: robust sparse spiking network pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", o.sets, "override a key, k=v (repeatable)");
  app.add_option("--seed", o.seed, "seed override");
  app.add_option("--input", o.input, "input checkpoint");
  app.add_option("--out", o.out, "output path");
  app.add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  app.fallthrough();
  std::string chosen;
  for (const char* name : {"pretrain", "prune", "convert", "finetune", "evaluate", "energy"}) {
    app.add_subcommand(name)->callback([&chosen, name] { chosen = name; });
  }
  CLI11_PARSE(app, argc, argv);
  try {
    return run(chosen, o);
  } catch (const TrainingDiverged& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
