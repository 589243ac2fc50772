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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include <json.hpp>

#include "wdda/cli.hpp"

namespace wdda {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "wdda_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

void write_config() {
  std::ofstream(path("run.cfg")) << "batch_size = 2\nsource_steps = 4\n"
                                    "phase1_steps = 2\nphase2_steps = 2\n"
                                    "critic_steps = 2\nseed = 3\n";
}

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"evaluate", "--help"}).code == kExitOk);
  CHECK(run({}).code == kExitUsage);
  const Run r = run({"gen-data", "--out", path("x"), "--bogus"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("bogus") != std::string::npos);
  CHECK(run({"gen-data", "--scenario", "rain", "--out", path("x")}).code ==
        kExitUsage);
  CHECK(run({"critic-bench", "--dim", "2", "--delta", "1"}).code == kExitUsage);
}

TEST_CASE("missing inputs are usage errors naming the file") {
  const Run r = run({"train-source", "--config", path("nope.cfg"), "--data",
                     path("nodata"), "--out", path("a.ckpt")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("nope.cfg") != std::string::npos);

  std::ofstream(path("bad.cfg")) << "alpha = 1\nunknown_key = 2\n";
  const Run bad = run({"train-source", "--config", path("bad.cfg"), "--data",
                       path("nodata"), "--out", path("a.ckpt")});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("unknown_key") != std::string::npos);
}

TEST_CASE("critic-bench prints the truth next to the estimate") {
  const Run r = run({"critic-bench", "--dim", "1", "--delta", "2.0", "--steps",
                     "50", "--no-contrast"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("truth 2 ") != std::string::npos);
  CHECK(r.out.find("estimate ") != std::string::npos);
  CHECK(r.out.find("exact_1d 2") != std::string::npos);
}

TEST_CASE("pipeline through the command line") {
  write_config();
  const std::string data = path("data");
  REQUIRE(run({"gen-data", "--scenario", "fog", "--count", "6", "--test-count",
               "4", "--seed", "2", "--out", data})
              .code == kExitOk);
  CHECK(fs::exists(fs::path(data) / "source" / "annotations.jsonl"));
  CHECK(fs::exists(fs::path(data) / "target" / "annotations.jsonl"));
  CHECK(fs::exists(fs::path(data) / "target_test" / "annotations.jsonl"));

  const std::string metrics = path("metrics.csv");
  const std::string cfg = path("run.cfg");
  REQUIRE(run({"train-source", "--config", cfg, "--data", data + "/source",
               "--out", path("src.ckpt"), "--metrics", metrics})
              .code == kExitOk);

  // Local alignment refuses a checkpoint that skipped phase 1.
  const Run early = run({"align-local", "--config", cfg, "--source-ckpt",
                         path("src.ckpt"), "--source", data + "/source",
                         "--target", data + "/target", "--out", path("l.ckpt")});
  CHECK(early.code == kExitUsage);
  CHECK(early.err.find("global") != std::string::npos);
  CHECK(run({"align-local", "--config", cfg, "--ckpt", path("missing.ckpt"),
             "--source", data + "/source", "--target", data + "/target",
             "--out", path("l.ckpt")})
            .code == kExitUsage);

  REQUIRE(run({"align-global", "--config", cfg, "--source-ckpt",
               path("src.ckpt"), "--source", data + "/source", "--target",
               data + "/target", "--out", path("g.ckpt"), "--metrics", metrics})
              .code == kExitOk);
  REQUIRE(run({"align-local", "--config", cfg, "--ckpt", path("g.ckpt"),
               "--source", data + "/source", "--target", data + "/target",
               "--out", path("l.ckpt"), "--metrics", metrics})
              .code == kExitOk);

  std::ifstream in(metrics);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "step,phase,loss_critic,loss_gen,w_estimate,loss_det,wall_time");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4 + 2 + 2);

  const Run ev = run({"evaluate", "--ckpt", path("l.ckpt"), "--data",
                      data + "/target_test"});
  REQUIRE(ev.code == kExitOk);
  const auto j = nlohmann::json::parse(ev.out);
  CHECK(j.contains("mAP"));
  CHECK(run({"evaluate", "--ckpt", path("l.ckpt"), "--data",
             data + "/target_test"})
            .out == ev.out);

  // A corrupt checkpoint is a runtime failure.
  std::ofstream(path("junk.ckpt")) << "not a checkpoint";
  CHECK(run({"evaluate", "--ckpt", path("junk.ckpt"), "--data",
             data + "/target_test"})
            .code == kExitRuntime);
}

}  // TEST_SUITE

}  // namespace
}  // namespace wdda
