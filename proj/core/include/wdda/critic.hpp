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

#ifndef WDDA_CRITIC_HPP_
#define WDDA_CRITIC_HPP_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "wdda/nn.hpp"
#include "wdda/tensor.hpp"

namespace wdda {

enum class CriticVariant {
  kFull,  // full-width layers for 512-channel VGG features
  kDesk,   // narrowed widths for the desk-scale backbone
};

// Patch critic over backbone feature maps. Every conv is spectrally
// normalized, LeakyReLU between convs, no bias on the scoring conv. The
// full variant pools 2x2 first; the desk variant omits the pool because
// its feature maps are already small.
std::vector<LayerSpec> global_critic_spec(CriticVariant variant,
                                          int in_channels);
// Patch critic over pooled ROI features.
std::vector<LayerSpec> local_critic_spec(CriticVariant variant,
                                         int in_channels);
// Spectrally normalized MLP critic over [N, dim] point samples.
std::vector<LayerSpec> point_critic_spec(int dim, int hidden);
// Unconstrained MLP domain classifier over [N, dim] point samples.
std::vector<LayerSpec> point_classifier_spec(int dim, int hidden);
// Unconstrained conv domain classifier with the desk global critic's shape
// (the cross-entropy baseline).
std::vector<LayerSpec> domain_classifier_spec(int in_channels);

// Unbounded per-patch scores: [N, 1, H', W'] or [P, 1, h, w].
struct CriticOutput {
  Tensor patch_scores;
};

struct WEstimate {
  double value = 0.0;
  std::int64_t step = 0;
};

CriticOutput global_critic_forward(Network& critic, const Tensor& features,
                                   bool update_spectral_norm = false);
// `reverse_gradient` inserts a gradient-reversal layer in front of the
// critic, so one backward pass updates the critic and, with flipped sign,
// whatever produced `roi_features`.
CriticOutput local_critic_forward(Network& critic, const Tensor& roi_features,
                                  bool update_spectral_norm = false,
                                  bool reverse_gradient = false);

// mean(target scores) - mean(source scores), means over batch and patches
// jointly. Minimizing it maximizes the dual Wasserstein objective.
Tensor critic_loss(const CriticOutput& source, const CriticOutput& target);
// -mean(target scores); only the target mapping should receive gradient.
Tensor generator_loss(const CriticOutput& target);
// Same value as critic_loss; pair with local_critic_forward(...,
// reverse_gradient = true) to descend the critic and ascend the mapping.
Tensor local_alignment_loss(const CriticOutput& source,
                            const CriticOutput& target);
// The logged estimate is the negated critic loss.
WEstimate w_estimate(const Tensor& critic_loss_value, std::int64_t step);

// Sigmoid BCE of the classifier's patch logits with domain labels 1
// (source) and 0 (target), averaged over every patch of both batches.
Tensor ce_domain_classifier_loss(Network& classifier, const Tensor& features_s,
                                 const Tensor& features_t);
// Generator objective with reversed labels (source 0, target 1).
Tensor ce_generator_loss(Network& classifier, const Tensor& features_s,
                         const Tensor& features_t);
// Generator objective of gradient-reversal training: the negated
// classifier loss. Saturates once the classifier separates the domains.
Tensor ce_reversal_generator_loss(Network& classifier,
                                  const Tensor& features_s,
                                  const Tensor& features_t);

// Training a point critic on a sample pair, as a check of the dual
// estimator.
struct PointCriticOptions {
  int hidden = 64;
  int steps = 2000;
  int batch = 128;
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  int eval_every = 100;
  std::uint64_t seed = 0;
};

struct PointCriticResult {
  Network critic;
  double estimate = 0.0;  // final full-sample estimate
  std::vector<std::pair<int, double>> trace;  // (critic steps, estimate)
};

// mean D(source) - mean D(target) over every sample, without updating the
// power-iteration state.
double point_w_estimate(Network& critic, const Tensor& source,
                        const Tensor& target);

PointCriticResult train_point_critic(const Tensor& source,
                                     const Tensor& target,
                                     const PointCriticOptions& options);

// Mean per-sample norm of the generator-loss gradient with respect to the
// target samples, for a cross-entropy domain classifier trained to a small
// loss and for a trained Wasserstein critic.
struct GradientContrast {
  double ce_classifier_loss = 0.0;
  int ce_steps = 0;
  double ce_reversal_grad = 0.0;        // negated classifier loss
  double ce_reversed_label_grad = 0.0;  // labels swapped
  double wasserstein_grad = 0.0;
  double w_estimate = 0.0;
};

GradientContrast generator_gradient_contrast(
    const Tensor& source, const Tensor& target,
    const PointCriticOptions& options, double ce_target_loss = 1e-3,
    int max_ce_steps = 5000);

/// Exact Wasserstein-1 distance between two equal-size empirical measures
/// on the real line: mean |x_(i) - y_(i)| over the sorted samples.
/// Throws std::invalid_argument for empty or unequal inputs.
double exact_w1_sorted(std::span<const double> x, std::span<const double> y);

}  // namespace wdda

#endif  // WDDA_CRITIC_HPP_
