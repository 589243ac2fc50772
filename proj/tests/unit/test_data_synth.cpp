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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <doctest.h>

#include "wdda/critic.hpp"
#include "wdda/data_synth.hpp"

namespace wdda {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wdda_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<double> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (values(a[i].image) != values(b[i].image)) return false;
    if (a[i].boxes != b[i].boxes || a[i].labels != b[i].labels) return false;
  }
  return true;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

TEST_SUITE("data_synth") {

TEST_CASE("generation is deterministic per seed") {
  const DomainParams p;
  CHECK(same_dataset(gen_shapes_dataset(8, 3, p), gen_shapes_dataset(8, 3, p)));
  CHECK_FALSE(
      same_dataset(gen_shapes_dataset(8, 3, p), gen_shapes_dataset(8, 4, p)));
}

TEST_CASE("generated samples satisfy the dataset invariants") {
  const Dataset d = gen_shapes_dataset(200, 9, DomainParams{});
  std::map<int, int> counts;
  for (const auto& s : d) {
    CHECK(s.image.shape() == Shape{3, 64, 64});
    CHECK(s.boxes.size() == s.labels.size());
    CHECK(s.boxes.size() >= 1);
    CHECK(s.boxes.size() <= 4);
    for (std::size_t k = 0; k < s.boxes.size(); ++k) {
      CHECK(s.boxes[k].valid());
      CHECK(s.boxes[k].within(64, 64));
      ++counts[s.labels[k]];
    }
    for (double v : s.image.data()) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      // 8-bit quantized.
      REQUIRE(std::abs(v * 255 - std::round(v * 255)) < 1e-9);
    }
  }
  // Uniform class mix, loosely.
  const int total = counts[0] + counts[1] + counts[2];
  for (int c = 0; c < 3; ++c) {
    CHECK(counts[c] > total / 4);
    CHECK(counts[c] < total / 2);
  }
}

TEST_CASE("a rendered square's box is its corners") {
  const auto mask = shape_mask(kSquare, 20, 30, 10, 64);
  CHECK(mask_box(mask, 64) == Box{15, 25, 25, 35});
}

TEST_CASE("a rendered circle's box matches its radius within a pixel") {
  for (double r : {5.0, 7.5, 11.0}) {
    const double cx = 30, cy = 33;
    const auto mask = shape_mask(kCircle, cx, cy, 2 * r, 64);
    // Independent scan of the mask for its extreme rows and columns.
    int x1 = 64, x2 = -1, y1 = 64, y2 = -1;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (mask[y * 64 + x]) {
          x1 = std::min(x1, x);
          x2 = std::max(x2, x);
          y1 = std::min(y1, y);
          y2 = std::max(y2, y);
        }
    const Box b = mask_box(mask, 64);
    CHECK(b == Box{double(x1), double(y1), double(x2 + 1), double(y2 + 1)});
    CHECK(std::abs(b.x1 - (cx - r)) <= 1.0);
    CHECK(std::abs(b.y1 - (cy - r)) <= 1.0);
    CHECK(std::abs(b.x2 - (cx + r)) <= 1.0);
    CHECK(std::abs(b.y2 - (cy + r)) <= 1.0);
  }
  CHECK_THROWS(mask_box(std::vector<unsigned char>(16, 0), 4));
}

TEST_CASE("apply_fog examples") {
  const Dataset d = gen_shapes_dataset(1, 2, DomainParams{});
  const auto depth = vertical_depth(64, 64);
  CHECK(values(apply_fog(d[0].image, depth, 0.0, 0.8)) == values(d[0].image));

  const Tensor thick = apply_fog(d[0].image, depth, 1e9, 0.7);
  // The top row has depth 0 and stays clear; every other row is airlight.
  for (int c = 0; c < 3; ++c)
    for (int i = 64; i < 64 * 64; ++i)
      REQUIRE(std::abs(thick.data()[c * 4096 + i] - 0.7) < 1e-5);

  const double one[] = {1.0};
  const Tensor px = apply_fog(Tensor({1, 1, 1}, {0.0}), one, std::log(2.0), 1.0);
  CHECK(px.data()[0] == doctest::Approx(0.5));
}

TEST_CASE("fog pairs share annotations and differ in pixels") {
  const auto [src, tgt] = make_domain_pair(Scenario::kFog, 20, 5);
  REQUIRE(src.size() == tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    CHECK(src[i].boxes == tgt[i].boxes);
    CHECK(src[i].labels == tgt[i].labels);
    CHECK(values(src[i].image) != values(tgt[i].image));
  }
}

TEST_CASE("style pair box areas follow the configured scale") {
  const auto [src, tgt] = make_domain_pair(Scenario::kStyle, 400, 6);
  std::map<int, std::pair<double, int>> as, at;
  for (const auto& s : src)
    for (std::size_t k = 0; k < s.boxes.size(); ++k) {
      as[s.labels[k]].first += s.boxes[k].area();
      ++as[s.labels[k]].second;
    }
  for (const auto& s : tgt)
    for (std::size_t k = 0; k < s.boxes.size(); ++k) {
      at[s.labels[k]].first += s.boxes[k].area();
      ++at[s.labels[k]].second;
    }
  const double scale = target_params(Scenario::kStyle).object_scale;
  for (int c = 0; c < 3; ++c) {
    const double ratio = (at[c].first / at[c].second) / (as[c].first / as[c].second);
    // Areas scale with the square of the extent; allow rasterization slack.
    CHECK(ratio > 0.85 * scale * scale);
    CHECK(ratio < 1.15 * scale * scale);
  }
}

TEST_CASE("gaussian pairs are exact translates") {
  const double d1[] = {2.0};
  const PointPair p = gen_gaussian_pair(1, d1, 500, 3);
  const auto s = p.source.data();
  const auto t = p.target.data();
  CHECK(exact_w1_sorted({s.begin(), s.end()}, {t.begin(), t.end()}) ==
        doctest::Approx(2.0).epsilon(1e-12));
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(t[i] - s[i] == doctest::Approx(2.0));

  const double d0[] = {0.0, 0.0};
  const PointPair z = gen_gaussian_pair(2, d0, 50, 3);
  CHECK(values(z.source) == values(z.target));

  const double d2[] = {3.0, 4.0};
  const PointPair q = gen_gaussian_pair(2, d2, 100, 3);
  CHECK(q.source.shape() == Shape{100, 2});
  for (int i = 0; i < 100; ++i) {
    const double dx = q.target.data()[2 * i] - q.source.data()[2 * i];
    const double dy = q.target.data()[2 * i + 1] - q.source.data()[2 * i + 1];
    CHECK(std::hypot(dx, dy) == doctest::Approx(5.0));
  }
  CHECK_THROWS(gen_gaussian_pair(3, d2, 10, 0));
}

TEST_CASE("1-D translation pairs have the exact distance") {
  for (double delta : {0.0, 0.25, 1.0, 3.5, -2.0}) {
    const double d[] = {delta};
    const PointPair p = gen_gaussian_pair(1, d, 257, 11);
    const auto s = p.source.data();
    const auto t = p.target.data();
    CHECK(std::abs(exact_w1_sorted({s.begin(), s.end()}, {t.begin(), t.end()}) -
                   std::abs(delta)) < 1e-6);
  }
}

TEST_CASE("horizontal flip mirrors boxes") {
  const Dataset d = gen_shapes_dataset(1, 4, DomainParams{});
  const DetectionSample f = flip_horizontal(d[0]);
  for (std::size_t k = 0; k < d[0].boxes.size(); ++k) {
    CHECK(f.boxes[k] == Box{64 - d[0].boxes[k].x2, d[0].boxes[k].y1,
                            64 - d[0].boxes[k].x1, d[0].boxes[k].y2});
  }
  CHECK(f.image.data()[5] == d[0].image.data()[58]);
  CHECK(values(flip_horizontal(f).image) == values(d[0].image));
}

TEST_CASE("dataset save/load round trip") {
  const fs::path dir = scratch_dir("roundtrip");
  const auto [src, tgt] = make_domain_pair(Scenario::kFog, 6, 8);
  save_dataset(tgt, dir);
  CHECK(fs::exists(dir / "images" / "000000.png"));
  const Dataset back = load_dataset(dir);
  CHECK(same_dataset(tgt, back));
  for (const auto& s : back)
    for (const Box& b : s.boxes) CHECK(b.valid());
  fs::remove_all(dir);
}

TEST_CASE("dataset load errors") {
  const fs::path dir = scratch_dir("errors");
  save_dataset(gen_shapes_dataset(3, 1, DomainParams{}), dir);
  const auto lines = read_lines(dir / "annotations.jsonl");
  REQUIRE(lines.size() == 3);

  // Drop the second annotation line: the error names the unannotated image.
  write_lines(dir / "annotations.jsonl", {lines[0], lines[2]});
  try {
    load_dataset(dir);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("000001.png") != std::string::npos);
  }

  // A box without a label.
  std::string extra = lines[1];
  const auto pos = extra.find("\"labels\":[");
  extra = extra.substr(0, pos) + "\"labels\":[]}";
  write_lines(dir / "annotations.jsonl", {lines[0], extra, lines[2]});
  try {
    load_dataset(dir);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("000001.png") != std::string::npos);
  }
  fs::remove_all(dir);
  CHECK_THROWS(load_dataset(dir));
}

TEST_CASE("generation throughput") {
  const auto start = std::chrono::steady_clock::now();
  const Dataset d = gen_shapes_dataset(1000, 1, DomainParams{});
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  CHECK(d.size() == 1000);
  CHECK(seconds < 60.0);
}

}  // TEST_SUITE

}  // namespace
}  // namespace wdda
