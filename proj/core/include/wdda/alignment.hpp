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

#ifndef WDDA_ALIGNMENT_HPP_
#define WDDA_ALIGNMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdda/config.hpp"
#include "wdda/data_synth.hpp"
#include "wdda/detector.hpp"
#include "wdda/nn.hpp"

namespace wdda {

// Raised when a stage is started from a checkpoint of the wrong phase.
class PhaseOrderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

DetectorConfig make_detector_config(const AlignmentConfig& config);

// All networks of the method. Parameter names are unique across the set.
struct Models {
  DetectorConfig detector;
  Network source_backbone;  // theta_s
  Network target_backbone;  // theta_t
  DetectorHeads heads;      // sigma: shared RPN and ROI classifier
  Network global_critic;    // omega_g
  Network local_critic;     // omega_l

  std::vector<Network*> networks();
  std::vector<const Network*> networks() const;
  // nullptr when no network owns `name`.
  Tensor* find_parameter(const std::string& name);
};

Models build_models(const AlignmentConfig& config);

// An Adam state together with the parameter names it was created for.
struct NamedAdam {
  std::string name;
  std::vector<std::string> params;
  AdamState state;
};

struct Checkpoint {
  AlignmentConfig config;
  // "init", "source", "global" or "local".
  std::string phase = "init";
  std::int64_t step = 0;
  Models models;
  std::vector<NamedAdam> optimizers;

  NamedAdam* find_optimizer(const std::string& name);
};

// Fresh models with no training and no optimizer state.
Checkpoint initial_checkpoint(const AlignmentConfig& config);

struct MetricsRecord {
  std::int64_t step = 0;
  std::string phase;
  std::optional<double> loss_critic;
  std::optional<double> loss_gen;
  std::optional<double> w_estimate;
  std::optional<double> loss_det;
  double wall_time = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,phase,loss_critic,loss_gen,w_estimate,loss_det,wall_time";

class MetricsLog {
 public:
  void append(MetricsRecord record) { records_.push_back(std::move(record)); }
  const std::vector<MetricsRecord>& records() const { return records_; }
  std::vector<MetricsRecord> phase_records(const std::string& phase) const;

  // Rows without the header.
  std::string to_csv_rows() const;
  // Writes the header when the file is new or empty, then appends rows.
  void append_to_file(const std::filesystem::path& path) const;

 private:
  std::vector<MetricsRecord> records_;
};

enum class StepKind { kSource, kCritic, kGenerator, kLocal };

struct StepEvent {
  StepKind kind;
  std::int64_t step;  // outer iteration
};

struct TrainHooks {
  MetricsLog* metrics = nullptr;
  std::vector<std::string>* warnings = nullptr;
  // Called after every parameter update with the current models.
  std::function<void(const StepEvent&, const Models&)> observer;
};

/// Optimizes theta_s and sigma jointly on the detection loss with
/// Adam(source_alpha, betas_det). The returned checkpoint has phase
/// "source" and theta_t initialized as a copy of theta_s.
Checkpoint train_source(const Dataset& source, const AlignmentConfig& config,
                        const TrainHooks& hooks = {});

/// Global alignment. Each outer iteration runs `critic_steps` critic
/// updates on n source + n target images (descending critic_loss, i.e.
/// ascending the Wasserstein objective), then one target-backbone update
/// on generator_loss with the critic frozen. theta_s and sigma are never
/// updated. Requires a checkpoint of phase "source".
Checkpoint phase1_global_align(const Checkpoint& source_ckpt,
                               const Dataset& source, const Dataset& target,
                               const AlignmentConfig& config,
                               const TrainHooks& hooks = {});

/// Local alignment with both backbones frozen. ROI features of both
/// domains pass through a gradient-reversal layer into the local critic,
/// so one backward pass descends the critic and ascends the shared head on
/// local_alignment_loss (one Adam with betas_align over both). The source
/// detection gradient of sigma is clipped to clip_norm and applied by a
/// second Adam (lr gamma * alpha, betas_det). Requires a checkpoint of
/// phase "global" or "local".
Checkpoint phase2_local_align(const Checkpoint& global_ckpt,
                              const Dataset& source, const Dataset& target,
                              const AlignmentConfig& config,
                              const TrainHooks& hooks = {});

// Batch indices for one step: n distinct indices when the dataset is large
// enough, otherwise n draws with replacement (and `with_replacement` set).
std::vector<std::size_t> sample_batch(std::size_t dataset_size, int n,
                                      std::uint64_t seed, std::uint64_t stream,
                                      std::int64_t step, std::uint64_t sub,
                                      bool* with_replacement = nullptr);

// FNV-1a over parameter names and values; used for freeze assertions.
std::uint64_t parameter_hash(const Network& network);
std::uint64_t parameter_hash(const DetectorHeads& heads);

}  // namespace wdda

#endif  // WDDA_ALIGNMENT_HPP_
