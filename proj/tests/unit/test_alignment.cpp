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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "wdda/alignment.hpp"
#include "wdda/checkpoint.hpp"
#include "wdda/data_synth.hpp"

namespace wdda {
namespace {

namespace fs = std::filesystem;

AlignmentConfig tiny_config() {
  AlignmentConfig c;
  c.batch_size = 2;
  c.source_steps = 6;
  c.phase1_steps = 3;
  c.phase2_steps = 3;
  c.critic_steps = 3;
  c.seed = 5;
  return c;
}

struct Fixture {
  AlignmentConfig config = tiny_config();
  Dataset source;
  Dataset target;
  Checkpoint trained;
  Fixture() {
    auto pair = make_domain_pair(Scenario::kFog, 8, 21);
    source = std::move(pair.first);
    target = std::move(pair.second);
    trained = train_source(source, config);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::vector<double> flat_params(const Network& net) {
  std::vector<double> out;
  for (const auto& p : net.parameters()) {
    out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  }
  return out;
}

TEST_SUITE("alignment") {

TEST_CASE("zero source steps returns the initialization") {
  AlignmentConfig c = tiny_config();
  c.source_steps = 0;
  const Checkpoint init = initial_checkpoint(c);
  const Checkpoint ck = train_source(fixture().source, c);
  CHECK(ck.phase == "source");
  CHECK(parameter_hash(ck.models.source_backbone) ==
        parameter_hash(init.models.source_backbone));
  CHECK(parameter_hash(ck.models.heads) == parameter_hash(init.models.heads));
}

TEST_CASE("train_source rejects an empty dataset") {
  CHECK_THROWS(train_source({}, tiny_config()));
}

TEST_CASE("phase ordering is enforced") {
  Fixture& f = fixture();
  const Checkpoint init = initial_checkpoint(f.config);
  CHECK_THROWS_AS(phase1_global_align(init, f.source, f.target, f.config),
                  PhaseOrderError);
  CHECK_THROWS_AS(phase2_local_align(init, f.source, f.target, f.config),
                  PhaseOrderError);
  CHECK_THROWS_AS(phase2_local_align(f.trained, f.source, f.target, f.config),
                  PhaseOrderError);
}

TEST_CASE("phase 1 freezes the source network and runs s_d critic steps") {
  Fixture& f = fixture();
  const std::uint64_t hs = parameter_hash(f.trained.models.source_backbone);
  const std::uint64_t hh = parameter_hash(f.trained.models.heads);
  std::vector<StepKind> kinds;
  bool critic_grads_zero = true;
  TrainHooks hooks;
  hooks.observer = [&](const StepEvent& e, const Models& m) {
    kinds.push_back(e.kind);
    CHECK(parameter_hash(m.source_backbone) == hs);
    CHECK(parameter_hash(m.heads) == hh);
    if (e.kind == StepKind::kGenerator) {
      for (const auto& p : m.global_critic.parameters())
        for (double g : p.tensor.grad()) critic_grads_zero = critic_grads_zero && g == 0.0;
    }
  };
  const Checkpoint g = phase1_global_align(f.trained, f.source, f.target, f.config, hooks);
  CHECK(critic_grads_zero);
  // Exactly s_d critic updates before every generator update.
  REQUIRE(kinds.size() == static_cast<std::size_t>(f.config.phase1_steps *
                                                   (f.config.critic_steps + 1)));
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const bool gen = (i % (f.config.critic_steps + 1)) ==
                     static_cast<std::size_t>(f.config.critic_steps);
    CHECK(kinds[i] == (gen ? StepKind::kGenerator : StepKind::kCritic));
  }
  CHECK(g.phase == "global");
  CHECK(parameter_hash(g.models.source_backbone) == hs);
  CHECK(parameter_hash(g.models.heads) == hh);
  CHECK(parameter_hash(g.models.target_backbone) != hs);
}

TEST_CASE("phase 1 keeps the frozen first block of the target network") {
  Fixture& f = fixture();
  const Checkpoint g = phase1_global_align(f.trained, f.source, f.target, f.config);
  const auto& src = f.trained.models.source_backbone.parameters();
  const auto& tgt = g.models.target_backbone.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const bool first = src[i].name.find(".0.") != std::string::npos;
    const std::vector<double> a(src[i].tensor.data().begin(), src[i].tensor.data().end());
    const std::vector<double> b(tgt[i].tensor.data().begin(), tgt[i].tensor.data().end());
    if (first) CHECK(a == b);
  }
}

TEST_CASE("identical domains start with a zero W estimate") {
  Fixture& f = fixture();
  MetricsLog log;
  AlignmentConfig c = f.config;
  c.phase1_steps = 1;
  phase1_global_align(f.trained, f.source, f.source, c, {&log, nullptr, {}});
  REQUIRE(log.records().size() == 1);
  CHECK(*log.records()[0].w_estimate == 0.0);
}

TEST_CASE("phase 2 freezes both backbones") {
  Fixture& f = fixture();
  const Checkpoint g = phase1_global_align(f.trained, f.source, f.target, f.config);
  const std::uint64_t hs = parameter_hash(g.models.source_backbone);
  const std::uint64_t ht = parameter_hash(g.models.target_backbone);
  const std::uint64_t hg = parameter_hash(g.models.global_critic);
  bool target_grads_zero = true;
  TrainHooks hooks;
  hooks.observer = [&](const StepEvent& e, const Models& m) {
    CHECK(e.kind == StepKind::kLocal);
    CHECK(parameter_hash(m.source_backbone) == hs);
    CHECK(parameter_hash(m.target_backbone) == ht);
    for (const auto& p : m.target_backbone.parameters())
      for (double v : p.tensor.grad()) target_grads_zero = target_grads_zero && v == 0.0;
  };
  const Checkpoint l = phase2_local_align(g, f.source, f.target, f.config, hooks);
  CHECK(target_grads_zero);
  CHECK(l.phase == "local");
  CHECK(parameter_hash(l.models.source_backbone) == hs);
  CHECK(parameter_hash(l.models.target_backbone) == ht);
  CHECK(parameter_hash(l.models.global_critic) == hg);
  CHECK(parameter_hash(l.models.heads) != parameter_hash(g.models.heads));
}

TEST_CASE("gamma zero matches the purely adversarial run") {
  Fixture& f = fixture();
  const Checkpoint g = phase1_global_align(f.trained, f.source, f.target, f.config);
  AlignmentConfig zero = f.config;
  zero.gamma = 0.0;
  AlignmentConfig pure = f.config;
  pure.local_detection_term = false;
  const Checkpoint a = phase2_local_align(g, f.source, f.target, zero);
  const Checkpoint b = phase2_local_align(g, f.source, f.target, pure);
  for (std::size_t i = 0; i < a.models.heads.networks().size(); ++i) {
    CHECK(flat_params(*a.models.heads.networks()[i]) ==
          flat_params(*b.models.heads.networks()[i]));
  }
  CHECK(flat_params(a.models.local_critic) == flat_params(b.models.local_critic));
  // With the detection term on, the heads move differently.
  const Checkpoint d = phase2_local_align(g, f.source, f.target, f.config);
  CHECK(parameter_hash(d.models.heads) != parameter_hash(a.models.heads));
}

TEST_CASE("identical domains keep the local estimate near zero") {
  Fixture& f = fixture();
  const Checkpoint g = phase1_global_align(f.trained, f.source, f.source, f.config);
  AlignmentConfig c = f.config;
  c.phase2_steps = 20;
  MetricsLog log;
  phase2_local_align(g, f.source, f.source, c, {&log, nullptr, {}});
  REQUIRE(log.records().size() == 20);
  for (const auto& r : log.records()) CHECK(std::abs(*r.w_estimate) <= 0.05);
}

TEST_CASE("small datasets are sampled with replacement and warned about") {
  Fixture& f = fixture();
  AlignmentConfig c = f.config;
  c.batch_size = 12;
  c.source_steps = 1;
  std::vector<std::string> warnings;
  train_source(f.source, c, {nullptr, &warnings, {}});
  CHECK(warnings.size() == 1);
  bool replaced = false;
  const auto idx = sample_batch(3, 5, 1, 2, 0, 0, &replaced);
  CHECK(replaced);
  CHECK(idx.size() == 5);
  const auto distinct = sample_batch(30, 5, 1, 2, 0, 0, &replaced);
  CHECK_FALSE(replaced);
  CHECK(std::set<std::size_t>(distinct.begin(), distinct.end()).size() == 5);
}

TEST_CASE("metrics rows and file layout") {
  MetricsLog log;
  log.append({0, "source", std::nullopt, std::nullopt, std::nullopt, 1.5, 0.0});
  log.append({3, "global", -0.25, 0.1, 0.25, std::nullopt, 0.0});
  CHECK(log.to_csv_rows() == "0,source,,,,1.5,0\n3,global,-0.25,0.1,0.25,,0\n");
  CHECK(log.phase_records("global").size() == 1);

  const fs::path p = fs::temp_directory_path() / "wdda_test_metrics.csv";
  fs::remove(p);
  log.append_to_file(p);
  log.append_to_file(p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  CHECK(header == kMetricsHeader);
  std::stringstream rest;
  rest << in.rdbuf();
  CHECK(rest.str() == log.to_csv_rows() + log.to_csv_rows());
  fs::remove(p);
}

TEST_CASE("parameter_hash tracks every value") {
  Fixture& f = fixture();
  Network net = f.trained.models.global_critic;
  const std::uint64_t h = parameter_hash(net);
  net.parameters().back().tensor.mutable_data()[0] += 1e-3;
  CHECK(parameter_hash(net) != h);
}

}  // TEST_SUITE

}  // namespace
}  // namespace wdda
