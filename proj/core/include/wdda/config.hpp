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

#ifndef WDDA_CONFIG_HPP_
#define WDDA_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wdda {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hyperparameters of source training and the two alignment phases.
struct AlignmentConfig {
  double alpha = 2e-4;       // adversarial learning rate
  double gamma = 1.0;        // detection-step learning-rate scale
  double clip_norm = 1.0;    // c, bound on the detection gradient norm
  int batch_size = 4;        // n, images per domain per step
  int proposals = 16;        // m, proposals per image
  int critic_steps = 5;      // s_d
  std::array<double, 2> betas_align{0.0, 0.99};
  std::array<double, 2> betas_det{0.5, 0.99};
  double source_alpha = 1e-3;
  int source_steps = 1500;
  int phase1_steps = 500;
  int phase2_steps = 200;
  std::uint64_t seed = 0;
  bool freeze_first_block = true;
  bool flip_augment = true;
  // Phase 2 adds the clipped source detection step when set.
  bool local_detection_term = true;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  // Kept for full-resolution runs; desk images are rendered at 64 px.
  int image_short_side = 600;
  // Metrics carry elapsed seconds only when set, so that default runs are
  // byte-reproducible.
  bool log_wall_time = false;

  bool operator==(const AlignmentConfig&) const = default;
};

// Throws ConfigError naming the first invalid field.
void validate(const AlignmentConfig& config);

struct RunConfig {
  AlignmentConfig align;
  std::string scenario = "fog-v1";
  std::string source_data;
  std::string target_data;
  std::string output_dir;
  double eval_iou = 0.5;

  bool operator==(const RunConfig&) const = default;
};

/// Parses the line-oriented `key = value` format. Blank lines are ignored and
/// '#' starts a comment; betas are written "b1, b2"; booleans are
/// true/false. Unknown keys, duplicate keys and malformed values raise
/// ConfigError with the line number. Unset keys keep their defaults.
RunConfig parse_config(std::string_view text);
// Every key, one per line, in a fixed order; parse_config inverts it.
std::string serialize_config(const RunConfig& config);
// The alignment subset only.
std::string serialize_alignment(const AlignmentConfig& config);
AlignmentConfig parse_alignment(std::string_view text);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace wdda

#endif  // WDDA_CONFIG_HPP_
