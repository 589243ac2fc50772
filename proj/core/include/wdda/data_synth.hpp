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

#ifndef WDDA_DATA_SYNTH_HPP_
#define WDDA_DATA_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wdda/box.hpp"
#include "wdda/detector.hpp"
#include "wdda/tensor.hpp"

namespace wdda {

enum ShapeClass : int { kCircle = 0, kSquare = 1, kTriangle = 2 };
inline constexpr int kNumShapeClasses = 3;

struct DetectionSample {
  Tensor image;  // [3, H, W], values in [0, 1], multiples of 1/255
  std::vector<Box> boxes;
  std::vector<int> labels;

  GroundTruth ground_truth() const { return {boxes, labels}; }
};

using Dataset = std::vector<DetectionSample>;

struct DomainParams {
  int image_size = 64;
  int min_objects = 1;
  int max_objects = 4;
  double min_object_size = 12.0;
  double max_object_size = 24.0;
  double object_scale = 1.0;
  // Hue rotation in degrees applied to every colour drawn.
  double palette_rotation = 0.0;
  // Background stripe frequency in cycles per image, and its amplitude.
  double texture_frequency = 2.0;
  double texture_amplitude = 0.08;
  double pixel_noise = 0.03;
  double brightness_jitter = 0.05;
  double contrast_jitter = 0.1;
  double fog_beta = 0.0;
  double airlight = 0.8;
};

enum class Scenario { kFog, kStyle };

// Named presets: "fog-v1" and "style-v1".
Scenario parse_scenario(std::string_view name);
const char* scenario_preset_name(Scenario scenario);
DomainParams source_params(Scenario scenario);
DomainParams target_params(Scenario scenario);

/// Renders `count` images with 1-4 non-overlapping shapes each. Per-image
/// random streams are keyed by (seed, index), so any prefix of a dataset
/// equals the smaller dataset with the same seed. Boxes are the tightest
/// rectangle around each shape's rendered pixels. Fog in `params` is
/// applied after rendering.
Dataset gen_shapes_dataset(std::size_t count, std::uint64_t seed,
                           const DomainParams& params);

// Single-image renderer used by gen_shapes_dataset.
DetectionSample render_sample(std::uint64_t seed, std::size_t index,
                              const DomainParams& params);

// Pixel mask of one shape on a size x size canvas, row-major.
std::vector<unsigned char> shape_mask(ShapeClass shape, double cx, double cy,
                                      double extent, int size);
// Tightest pixel rectangle (x2, y2 exclusive) around a non-empty mask.
Box mask_box(std::span<const unsigned char> mask, int size);

// Top-to-bottom linear depth ramp in [0, 1] for an h x w image.
std::vector<double> vertical_depth(int h, int w);

/// Attenuation fog: per pixel t = exp(-beta d), out = in t + A (1 - t),
/// clamped to [0, 1]. `depth` has one value per pixel of a channel and is
/// shared by all channels of a [C, H, W] image.
Tensor apply_fog(const Tensor& image, std::span<const double> depth,
                 double beta, double airlight);

// Fog scenario: target images are fogged copies of the source images
// with identical annotations. Style scenario: independent draws under
// shifted rendering statistics.
std::pair<Dataset, Dataset> make_domain_pair(Scenario scenario,
                                             std::size_t count,
                                             std::uint64_t seed);

// Seed of the held-out target split that accompanies a pair drawn with
// `seed`, so the test images never repeat training draws.
std::uint64_t held_out_seed(std::uint64_t seed);

struct PointPair {
  Tensor source;  // [count, dim]
  Tensor target;  // source + delta, row by row
};

PointPair gen_gaussian_pair(int dim, std::span<const double> delta,
                            std::size_t count, std::uint64_t seed);

DetectionSample flip_horizontal(const DetectionSample& sample);

// Stacks images into an [n, 3, H, W] batch.
Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices);
std::vector<GroundTruth> gather_ground_truth(
    const Dataset& data, std::span<const std::size_t> indices);

// Directory layout: images/NNNNNN.png plus annotations.jsonl with one
// {"file", "boxes", "labels"} object per line.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace wdda

#endif  // WDDA_DATA_SYNTH_HPP_
