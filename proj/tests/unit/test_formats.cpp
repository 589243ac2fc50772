// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "wdda/alignment.hpp"
#include "wdda/checkpoint.hpp"
#include "wdda/config.hpp"
#include "wdda/data_synth.hpp"

namespace wdda {
namespace {

namespace fs = std::filesystem;

std::vector<double> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

Checkpoint trained_checkpoint() {
  AlignmentConfig c;
  c.batch_size = 2;
  c.source_steps = 3;
  c.phase1_steps = 2;
  c.critic_steps = 2;
  c.seed = 9;
  c.alpha = 3.25e-4;
  const auto [s, t] = make_domain_pair(Scenario::kFog, 6, 4);
  return phase1_global_align(train_source(s, c), s, t, c);
}

void check_same(const Checkpoint& a, const Checkpoint& b) {
  CHECK(a.config == b.config);
  CHECK(a.phase == b.phase);
  CHECK(a.step == b.step);
  const auto na = a.models.networks();
  const auto nb = b.models.networks();
  REQUIRE(na.size() == nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    REQUIRE(na[i]->parameters().size() == nb[i]->parameters().size());
    for (std::size_t k = 0; k < na[i]->parameters().size(); ++k) {
      CHECK(na[i]->parameters()[k].name == nb[i]->parameters()[k].name);
      CHECK(values(na[i]->parameters()[k].tensor) ==
            values(nb[i]->parameters()[k].tensor));
    }
    for (std::size_t l = 0; l < na[i]->spectral_states().size(); ++l) {
      CHECK(na[i]->spectral_states()[l].u == nb[i]->spectral_states()[l].u);
    }
  }
  REQUIRE(a.optimizers.size() == b.optimizers.size());
  for (std::size_t i = 0; i < a.optimizers.size(); ++i) {
    const auto& oa = a.optimizers[i];
    const auto& ob = b.optimizers[i];
    CHECK(oa.name == ob.name);
    CHECK(oa.params == ob.params);
    CHECK(oa.state.step == ob.state.step);
    CHECK(oa.state.options.lr == ob.state.options.lr);
    CHECK(oa.state.options.beta1 == ob.state.options.beta1);
    CHECK(oa.state.m == ob.state.m);
    CHECK(oa.state.v == ob.state.v);
  }
}

TEST_SUITE("formats") {

TEST_CASE("config round trip") {
  RunConfig c;
  c.align.alpha = 1.0 / 3.0;
  c.align.gamma = 0.0;
  c.align.betas_det = {0.5, 0.999};
  c.align.seed = 123456789012345ULL;
  c.align.flip_augment = false;
  c.scenario = "style-v1";
  c.source_data = "data/a b";
  c.eval_iou = 0.7;
  const std::string text = serialize_config(c);
  CHECK(parse_config(text) == c);
  CHECK(serialize_config(parse_config(text)) == text);

  const fs::path p = fs::temp_directory_path() / "wdda_test_config.cfg";
  save_config(c, p);
  CHECK(load_config(p) == c);
  fs::remove(p);
}

TEST_CASE("config parsing rules") {
  const RunConfig c = parse_config(
      "# comment\n\nalpha = 0.001   # trailing\nbetas_align = 0.1, 0.9\n");
  CHECK(c.align.alpha == 0.001);
  CHECK(c.align.betas_align == std::array<double, 2>{0.1, 0.9});
  CHECK(c.align.critic_steps == 5);

  CHECK_THROWS_AS(parse_config("alpah = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("alpha = 1\nalpha = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("alpha 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("critic_steps = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("alpha = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("flip_augment = yes\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("betas_det = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/wdda.cfg"), ConfigError);
  try {
    parse_config("alpha = 1\nbogus = 2\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  const Checkpoint ck = trained_checkpoint();
  const auto bytes = serialize_checkpoint(ck);
  Checkpoint back = deserialize_checkpoint(bytes);
  check_same(ck, back);
  CHECK(serialize_checkpoint(back) == bytes);

  // Forward outputs agree bitwise.
  Checkpoint copy = ck;
  const Dataset d = gen_shapes_dataset(2, 1, DomainParams{});
  const std::vector<std::size_t> idx{0, 1};
  const Tensor images = stack_images(d, idx);
  CHECK(values(backbone_forward(copy.models.target_backbone, images)) ==
        values(backbone_forward(back.models.target_backbone, images)));

  const fs::path p = fs::temp_directory_path() / "wdda_test.ckpt";
  save_checkpoint(ck, p);
  check_same(ck, load_checkpoint(p));
  fs::remove(p);
}

TEST_CASE("checkpoint rejects corrupt input") {
  const auto bytes = serialize_checkpoint(trained_checkpoint());

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), CheckpointError);

  auto version = bytes;
  version[4] = static_cast<unsigned char>(kCheckpointVersion + 1);
  CHECK_THROWS_AS(deserialize_checkpoint(version), CheckpointError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), CheckpointError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), CheckpointError);
}

TEST_CASE("checkpoint records are matched by name and shape") {
  Checkpoint ck = trained_checkpoint();
  const auto good = serialize_checkpoint(ck);

  // An extra tensor in a network is an unexpected record on load.
  Checkpoint extra = ck;
  extra.models.local_critic.parameters().push_back(
      {"local_critic.99.weight", Tensor::zeros({2})});
  CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(extra)),
                  CheckpointError);

  // A reshaped tensor fails the shape check.
  Checkpoint reshaped = ck;
  auto& t = reshaped.models.local_critic.parameters()[0].tensor;
  t = Tensor::zeros({static_cast<int>(t.numel())});
  CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(reshaped)),
                  CheckpointError);

  // A dropped tensor is a missing record.
  Checkpoint missing = ck;
  missing.models.local_critic.parameters().pop_back();
  CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(missing)),
                  CheckpointError);
  CHECK_NOTHROW(deserialize_checkpoint(good));
}

}  // TEST_SUITE

}  // namespace
}  // namespace wdda
