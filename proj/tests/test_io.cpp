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

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "rsnn/checkpoint.hpp"
#include "rsnn/config.hpp"
#include "rsnn/pipeline.hpp"

using namespace rsnn;
namespace T = rsnn::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "rsnn_unit";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST_CASE("checkpoints round-trip parameters, masks and metadata") {
  Model m = T::tiny_snn(3);
  m.mask = mask_from_scores(lwm_scores(m.params), 0.8, Granularity::uniform);
  m.mask->kappa = 0.8;
  m.apply_mask();
  m.metadata["note"] = "x=1";
  const std::string bytes = serialize_checkpoint(m);
  const Model back = deserialize_checkpoint(bytes);
  CHECK(back.spec == m.spec);
  CHECK(back.metadata == m.metadata);
  REQUIRE(back.mask.has_value());
  CHECK(*back.mask == *m.mask);
  REQUIRE(back.params.size() == m.params.size());
  for (const auto& [name, t] : m.params) CHECK(back.params.at(name) == t);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(model_hash(back) == model_hash(m));
  const fs::path p = scratch("m.ckpt");
  save_checkpoint(m, p);
  CHECK(model_hash(load_checkpoint(p)) == model_hash(m));
}

TEST_CASE("corrupted checkpoints are rejected") {
  const std::string bytes = serialize_checkpoint(T::tiny_conv(1));
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
  bad = bytes;
  bad[8] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "z"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing.ckpt")), CheckpointError);
}

TEST_CASE("checkpoints inconsistent with their architecture are rejected") {
  Model m = T::tiny_conv(2);
  const std::string weight = m.params.begin()->first;
  Model wrong = m;
  wrong.params.at(weight) = Tensor({1, 1});
  CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(wrong)), CheckpointError);
  Model extra = m;
  extra.params.emplace("layer99.weight", Tensor({1}));
  CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(extra)), CheckpointError);
  Model missing = m;
  missing.params.erase(weight);
  CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(missing)), CheckpointError);

  Model sparse = m;
  sparse.mask = mask_from_scores(lwm_scores(m.params), 0.5, Granularity::uniform);
  sparse.apply_mask();
  CHECK_NOTHROW(deserialize_checkpoint(serialize_checkpoint(sparse)));
  const auto& [name, layer] = *sparse.mask->layers.begin();
  std::size_t off = 0;
  while (layer.bits[off]) ++off;
  sparse.params.at(name)[off] = 0.25f;
  CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(sparse)), CheckpointError);
}

TEST_CASE("fnv-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("config parsing, overrides and error messages") {
  Config c = Config::parse("# comment\nepochs = 3\n  lr=0.5 # trailing\n\nname = a b\n");
  CHECK(c.get_int("epochs") == 3);
  CHECK(c.get_double("lr") == 0.5);
  CHECK(c.get("name") == "a b");
  CHECK(c.get_int_or("missing", 7) == 7);
  CHECK_THROWS_WITH_AS(c.get("missing"), doctest::Contains("missing"), ConfigError);
  CHECK_THROWS_WITH_AS(c.check_known({"epochs", "lr"}), doctest::Contains("name"), ConfigError);
  CHECK_THROWS_WITH_AS(c.require({"epochs", "kappa"}), doctest::Contains("kappa"), ConfigError);
  CHECK_THROWS_AS(Config::parse("just words\n"), ConfigError);
  c.set("epochs", "x");
  CHECK_THROWS_AS(c.get_int("epochs"), ConfigError);
  c.set_assignment("epochs=9");
  CHECK(c.get_int("epochs") == 9);
  CHECK(env_name("batch_size") == "RSNN_BATCH_SIZE");
  setenv("RSNN_EPOCHS", "11", 1);
  c.apply_env({"epochs"});
  unsetenv("RSNN_EPOCHS");
  CHECK(c.get_int("epochs") == 11);
  CHECK(Config::parse("flag = true").get_bool_or("flag", false));
  CHECK_THROWS(Config::parse("flag = maybe").get_bool_or("flag", false));
}

TEST_CASE("subcommand schemas name unknown and missing keys") {
  Config c = Config::parse("dataset = blobs\ninput = a.ckpt\nkappa = 0.5\n");
  CHECK_THROWS_WITH_AS(c.require(required_keys("prune")), doctest::Contains("method"), ConfigError);
  c.set("architecture", "linear:2");
  CHECK_THROWS_WITH_AS(c.check_known(known_keys("prune")), doctest::Contains("architecture"), ConfigError);
  CHECK_THROWS_AS(known_keys("train"), ConfigError);
  Config d = Config::parse("dataset = nope");
  CHECK_THROWS_AS(load_data(d), ConfigError);
}

TEST_CASE("datasets round-trip through idx and raw files") {
  const Dataset g = make_glyphs(3, 40);
  g.validate();
  CHECK(g.sample_shape() == Shape{1, 16, 16});
  CHECK(make_glyphs(3, 40).images == g.images);
  save_idx(g, scratch("g-images.idx"), scratch("g-labels.idx"));
  const Dataset gi = load_idx(scratch("g-images.idx"), scratch("g-labels.idx"));
  CHECK(gi.labels == g.labels);
  CHECK(max_abs_diff(gi.images, g.images) <= 0.5f / 255.0f + 1e-6f);
  save_raw(g, scratch("g.json"));
  const Dataset gr = load_raw(scratch("g.json"));
  CHECK(gr.images == g.images);
  CHECK(gr.labels == g.labels);
  std::ofstream(scratch("bad.idx"), std::ios::binary) << "nope";
  CHECK_THROWS_AS(load_idx(scratch("bad.idx"), scratch("g-labels.idx")), DatasetError);
  Dataset bad = g;
  bad.labels[0] = 12;
  CHECK_THROWS_AS(bad.validate(), DatasetError);
  const Dataset b = make_blobs(1, 30, 3, 2, 0.05f);
  b.validate();
  CHECK(b.classes == 3);
}

TEST_CASE("evaluation refuses ensembles against ANN checkpoints") {
  const Model ann = T::tiny_conv(2);
  const Dataset d = T::random_images(1, 4, {1, 8, 8}, 10);
  EvalConfig cfg;
  cfg.ensemble = EnsembleSpec::defaults();
  CHECK_THROWS(evaluate_model(ann, d, cfg));
  cfg.ensemble.reset();
  cfg.eps = {0.0f, 0.1f};
  const EvalReport r = evaluate_model(ann, d, cfg);
  CHECK(r.model_kind == "ann");
  CHECK(r.rows.size() == 4);
  CHECK(r.rows[0].robust_acc == doctest::Approx(r.clean_acc));
}
