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

#include "wdda/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "png_io.hpp"
#include "wdda/rng.hpp"

namespace wdda {

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb rgb{};
  switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (double& ch : rgb) ch += m;
  return rgb;
}

double quantize(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

bool boxes_touch(const Box& a, const Box& b, double margin) {
  return a.x1 < b.x2 + margin && b.x1 < a.x2 + margin &&
         a.y1 < b.y2 + margin && b.y1 < a.y2 + margin;
}

// Sign of the cross product (b - a) x (p - a).
double edge(double ax, double ay, double bx, double by, double px,
            double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

Scenario parse_scenario(std::string_view name) {
  if (name == "fog" || name == "fog-v1") return Scenario::kFog;
  if (name == "style" || name == "style-v1") return Scenario::kStyle;
  throw std::invalid_argument("unknown scenario '" + std::string(name) +
                              "' (expected fog, fog-v1, style or style-v1)");
}

const char* scenario_preset_name(Scenario scenario) {
  return scenario == Scenario::kFog ? "fog-v1" : "style-v1";
}

DomainParams source_params(Scenario) { return DomainParams{}; }

DomainParams target_params(Scenario scenario) {
  DomainParams p;
  if (scenario == Scenario::kFog) {
    p.fog_beta = 2.5;
    p.airlight = 0.8;
  } else {
    p.palette_rotation = 120.0;
    p.texture_frequency = 6.0;
    p.object_scale = 1.3;
  }
  return p;
}

std::vector<unsigned char> shape_mask(ShapeClass shape, double cx, double cy,
                                      double extent, int size) {
  std::vector<unsigned char> mask(static_cast<std::size_t>(size) * size, 0);
  const double h = 0.5 * extent;
  for (int y = 0; y < size; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5;
      bool inside = false;
      switch (shape) {
        case kCircle:
          inside = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= h * h;
          break;
        case kSquare:
          inside = px >= cx - h && px <= cx + h && py >= cy - h && py <= cy + h;
          break;
        case kTriangle: {
          // Apex up, base down; vertices listed clockwise in image space.
          const double e0 = edge(cx, cy - h, cx + h, cy + h, px, py);
          const double e1 = edge(cx + h, cy + h, cx - h, cy + h, px, py);
          const double e2 = edge(cx - h, cy + h, cx, cy - h, px, py);
          inside = e0 >= 0 && e1 >= 0 && e2 >= 0;
          break;
        }
      }
      mask[static_cast<std::size_t>(y) * size + x] = inside ? 1 : 0;
    }
  }
  return mask;
}

Box mask_box(std::span<const unsigned char> mask, int size) {
  int x1 = size, y1 = size, x2 = -1, y2 = -1;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!mask[static_cast<std::size_t>(y) * size + x]) continue;
      x1 = std::min(x1, x);
      y1 = std::min(y1, y);
      x2 = std::max(x2, x);
      y2 = std::max(y2, y);
    }
  }
  if (x2 < 0) throw std::invalid_argument("mask_box: empty mask");
  return {static_cast<double>(x1), static_cast<double>(y1),
          static_cast<double>(x2 + 1), static_cast<double>(y2 + 1)};
}

std::vector<double> vertical_depth(int h, int w) {
  std::vector<double> d(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double v = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    std::fill_n(d.begin() + static_cast<std::ptrdiff_t>(y) * w, w, v);
  }
  return d;
}

Tensor apply_fog(const Tensor& image, std::span<const double> depth,
                 double beta, double airlight) {
  if (image.rank() != 3) {
    throw ShapeError("apply_fog: expected [C, H, W], got " +
                     shape_to_string(image.shape()));
  }
  const std::size_t plane =
      static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  if (depth.size() != plane) {
    throw ShapeError("apply_fog: depth map has " +
                     std::to_string(depth.size()) + " values, image plane " +
                     std::to_string(plane));
  }
  if (beta < 0) throw std::invalid_argument("apply_fog: beta must be >= 0");
  const auto in = image.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double t = std::exp(-beta * depth[i % plane]);
    out[i] = std::clamp(in[i] * t + airlight * (1.0 - t), 0.0, 1.0);
  }
  return Tensor(image.shape(), std::move(out));
}

DetectionSample render_sample(std::uint64_t seed, std::size_t index,
                              const DomainParams& p) {
  Rng rng({seed, static_cast<std::uint64_t>(index), 0xda7aULL});
  const int s = p.image_size;
  const std::size_t plane = static_cast<std::size_t>(s) * s;

  const double bg_hue = rng.uniform(0.0, 360.0) + p.palette_rotation;
  const double bg_val = rng.uniform(0.35, 0.65);
  const Rgb bg = hsv_to_rgb(bg_hue, rng.uniform(0.15, 0.4), bg_val);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double kx = 2.0 * std::numbers::pi * p.texture_frequency *
                    std::cos(angle) / s;
  const double ky = 2.0 * std::numbers::pi * p.texture_frequency *
                    std::sin(angle) / s;

  std::vector<double> px(3 * plane);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double tex =
          p.texture_amplitude * std::sin(kx * x + ky * y + phase);
      for (int c = 0; c < 3; ++c) {
        px[c * plane + static_cast<std::size_t>(y) * s + x] = bg[c] + tex;
      }
    }
  }

  DetectionSample sample;
  const int count = rng.uniform_int(p.min_objects, p.max_objects);
  for (int k = 0; k < count; ++k) {
    const auto cls = static_cast<ShapeClass>(rng.below(kNumShapeClasses));
    const double extent =
        std::round(rng.uniform(p.min_object_size, p.max_object_size) *
                   p.object_scale);
    const double lo = 0.5 * extent + 1.0;
    const double hi = s - 0.5 * extent - 1.0;
    const double fg_hue = rng.uniform(0.0, 360.0) + p.palette_rotation;
    const double sat = rng.uniform(0.5, 0.9);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    double val = bg_val + sign * rng.uniform(0.25, 0.45);
    if (val > 0.95 || val < 0.05) val = bg_val - sign * rng.uniform(0.25, 0.3);
    const Rgb fg = hsv_to_rgb(fg_hue, sat, std::clamp(val, 0.05, 0.95));
    for (int attempt = 0; attempt < 50; ++attempt) {
      // Integer centres keep square and circle boxes symmetric.
      const double cx = std::round(rng.uniform(lo, hi));
      const double cy = std::round(rng.uniform(lo, hi));
      auto mask = shape_mask(cls, cx, cy, extent, s);
      const Box box = mask_box(mask, s);
      const bool clash = std::any_of(
          sample.boxes.begin(), sample.boxes.end(),
          [&](const Box& b) { return boxes_touch(b, box, 2.0); });
      if (clash) continue;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!mask[i]) continue;
        for (int c = 0; c < 3; ++c) px[c * plane + i] = fg[c];
      }
      sample.boxes.push_back(box);
      sample.labels.push_back(cls);
      break;
    }
  }

  const double gain = 1.0 + rng.uniform(-p.contrast_jitter, p.contrast_jitter);
  const double offset = rng.uniform(-p.brightness_jitter, p.brightness_jitter);
  for (double& v : px) {
    v = quantize((v - 0.5) * gain + 0.5 + offset + p.pixel_noise * rng.normal());
  }
  sample.image = Tensor({3, s, s}, std::move(px));
  if (p.fog_beta > 0) {
    Tensor fogged = apply_fog(sample.image, vertical_depth(s, s), p.fog_beta,
                              p.airlight);
    std::vector<double> q(fogged.data().begin(), fogged.data().end());
    for (double& v : q) v = quantize(v);
    sample.image = Tensor({3, s, s}, std::move(q));
  }
  return sample;
}

Dataset gen_shapes_dataset(std::size_t count, std::uint64_t seed,
                           const DomainParams& params) {
  if (params.min_objects < 1 || params.max_objects < params.min_objects) {
    throw std::invalid_argument("gen_shapes_dataset: bad object count range");
  }
  Dataset data;
  data.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    data.push_back(render_sample(seed, i, params));
  }
  return data;
}

std::pair<Dataset, Dataset> make_domain_pair(Scenario scenario,
                                             std::size_t count,
                                             std::uint64_t seed) {
  const DomainParams src = source_params(scenario);
  const DomainParams tgt = target_params(scenario);
  Dataset source = gen_shapes_dataset(count, seed, src);
  if (scenario == Scenario::kStyle) {
    // Independent draw: a different stream for the target domain.
    return {std::move(source), gen_shapes_dataset(count, seed ^ 0x5171eULL, tgt)};
  }
  Dataset target;
  target.reserve(count);
  const auto depth = vertical_depth(src.image_size, src.image_size);
  for (const auto& s : source) {
    DetectionSample t = s;
    Tensor fogged = apply_fog(s.image, depth, tgt.fog_beta, tgt.airlight);
    std::vector<double> q(fogged.data().begin(), fogged.data().end());
    for (double& v : q) v = quantize(v);
    t.image = Tensor(s.image.shape(), std::move(q));
    target.push_back(std::move(t));
  }
  return {std::move(source), std::move(target)};
}

std::uint64_t held_out_seed(std::uint64_t seed) { return seed ^ 0x7e57da7aULL; }

PointPair gen_gaussian_pair(int dim, std::span<const double> delta,
                            std::size_t count, std::uint64_t seed) {
  if (dim < 1 || delta.size() != static_cast<std::size_t>(dim)) {
    throw std::invalid_argument("gen_gaussian_pair: delta must have " +
                                std::to_string(dim) + " entries");
  }
  Rng rng({seed, 0x6a055ULL});
  std::vector<double> s(count * dim), t(count * dim);
  for (std::size_t i = 0; i < count; ++i) {
    for (int d = 0; d < dim; ++d) {
      const double v = rng.normal();
      s[i * dim + d] = v;
      t[i * dim + d] = v + delta[d];
    }
  }
  const int n = static_cast<int>(count);
  return {Tensor({n, dim}, std::move(s)), Tensor({n, dim}, std::move(t))};
}

DetectionSample flip_horizontal(const DetectionSample& sample) {
  const int c = sample.image.dim(0);
  const int h = sample.image.dim(1);
  const int w = sample.image.dim(2);
  const auto in = sample.image.data();
  std::vector<double> out(in.size());
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < h; ++y) {
      const std::size_t row = (static_cast<std::size_t>(k) * h + y) * w;
      for (int x = 0; x < w; ++x) out[row + x] = in[row + (w - 1 - x)];
    }
  }
  DetectionSample f;
  f.image = Tensor(sample.image.shape(), std::move(out));
  f.labels = sample.labels;
  for (const Box& b : sample.boxes) f.boxes.push_back({w - b.x2, b.y1, w - b.x1, b.y2});
  return f;
}

Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("stack_images: no indices");
  const Shape& s = data.at(indices[0]).image.shape();
  const std::size_t per = shape_numel(s);
  std::vector<double> out;
  out.reserve(per * indices.size());
  for (std::size_t i : indices) {
    const Tensor& img = data.at(i).image;
    if (img.shape() != s) {
      throw ShapeError("stack_images: mixed image shapes " +
                       shape_to_string(s) + " and " +
                       shape_to_string(img.shape()));
    }
    out.insert(out.end(), img.data().begin(), img.data().end());
  }
  return Tensor({static_cast<int>(indices.size()), s[0], s[1], s[2]},
                std::move(out));
}

std::vector<GroundTruth> gather_ground_truth(
    const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<GroundTruth> gt;
  gt.reserve(indices.size());
  for (std::size_t i : indices) gt.push_back(data.at(i).ground_truth());
  return gt;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  std::ofstream ann(dir / "annotations.jsonl", std::ios::binary);
  if (!ann) {
    throw std::runtime_error("cannot write " +
                             (dir / "annotations.jsonl").string());
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const DetectionSample& s = data[i];
    if (s.image.rank() != 3 || s.image.dim(0) != 3) {
      throw ShapeError("save_dataset: images must be [3, H, W]");
    }
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.png", i);
    const int h = s.image.dim(1);
    const int w = s.image.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    detail::RgbImage img{w, h, std::vector<unsigned char>(3 * plane)};
    const auto v = s.image.data();
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) {
        img.pixels[3 * p + c] = static_cast<unsigned char>(
            std::lround(std::clamp(v[c * plane + p], 0.0, 1.0) * 255.0));
      }
    }
    detail::write_png(dir / name, img);

    nlohmann::json boxes = nlohmann::json::array();
    for (const Box& b : s.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
    nlohmann::json line = {{"file", name}, {"boxes", boxes}, {"labels", s.labels}};
    ann << line.dump() << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path ann_path = dir / "annotations.jsonl";
  std::ifstream ann(ann_path, std::ios::binary);
  if (!ann) throw std::runtime_error("cannot open " + ann_path.string());

  Dataset data;
  std::set<std::string> annotated;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(ann, text)) {
    ++line_no;
    if (text.empty()) continue;
    const std::string where = ann_path.string() + ":" + std::to_string(line_no);
    nlohmann::json line;
    try {
      line = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": invalid JSON: " + e.what());
    }
    if (!line.contains("file") || !line.contains("boxes") ||
        !line.contains("labels")) {
      throw std::runtime_error(where + ": needs file, boxes and labels");
    }
    const std::string file = line["file"].get<std::string>();
    const auto& boxes = line["boxes"];
    const auto& labels = line["labels"];
    if (boxes.size() != labels.size()) {
      throw std::runtime_error(file + ": " + std::to_string(boxes.size()) +
                               " boxes but " + std::to_string(labels.size()) +
                               " labels");
    }
    const detail::RgbImage img = detail::read_png(dir / file);
    DetectionSample s;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      if (boxes[k].size() != 4) {
        throw std::runtime_error(file + ": box " + std::to_string(k) +
                                 " needs 4 coordinates");
      }
      const Box b{boxes[k][0].get<double>(), boxes[k][1].get<double>(),
                  boxes[k][2].get<double>(), boxes[k][3].get<double>()};
      if (!b.valid() || !b.within(img.width, img.height)) {
        throw std::runtime_error(file + ": box " + std::to_string(k) +
                                 " is empty or outside the image");
      }
      const int label = labels[k].get<int>();
      if (label < 0 || label >= kNumShapeClasses) {
        throw std::runtime_error(file + ": label " + std::to_string(label) +
                                 " out of range");
      }
      s.boxes.push_back(b);
      s.labels.push_back(label);
    }
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    std::vector<double> v(3 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) v[c * plane + p] = img.pixels[3 * p + c] / 255.0;
    }
    s.image = Tensor({3, img.height, img.width}, std::move(v));
    data.push_back(std::move(s));
    annotated.insert(fs::path(file).lexically_normal().string());
  }

  const fs::path images = dir / "images";
  if (fs::is_directory(images)) {
    for (const auto& entry : fs::directory_iterator(images)) {
      if (entry.path().extension() != ".png") continue;
      const std::string rel =
          fs::path("images" / entry.path().filename()).lexically_normal().string();
      if (!annotated.count(rel)) {
        throw std::runtime_error(rel + ": no annotation line in " +
                                 ann_path.string());
      }
    }
  }
  return data;
}

}  // namespace wdda
