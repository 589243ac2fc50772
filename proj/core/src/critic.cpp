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

#include "wdda/critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wdda/ops.hpp"
#include "wdda/rng.hpp"

namespace wdda {

std::vector<LayerSpec> global_critic_spec(CriticVariant variant,
                                          int in_channels) {
  const bool full = variant == CriticVariant::kFull;
  const int wide = full ? 512 : 64;
  const int narrow = full ? 128 : 32;
  std::vector<LayerSpec> specs;
  if (full) specs.push_back(LayerSpec::max_pool(2, 2, 0));
  specs.push_back(LayerSpec::conv(in_channels, wide, 3, 2, 1, true));
  specs.push_back(LayerSpec::leaky_relu());
  specs.push_back(LayerSpec::conv(wide, narrow, 3, 2, 1, true));
  specs.push_back(LayerSpec::leaky_relu());
  specs.push_back(LayerSpec::conv(narrow, narrow, 3, 1, 1, true));
  specs.push_back(LayerSpec::leaky_relu());
  specs.push_back(LayerSpec::conv(narrow, 1, 3, 1, 1, true, false));
  return specs;
}

std::vector<LayerSpec> local_critic_spec(CriticVariant variant,
                                         int in_channels) {
  const bool full = variant == CriticVariant::kFull;
  const int wide = full ? 512 : 64;
  const int narrow = full ? 128 : 32;
  return {
      LayerSpec::conv(in_channels, wide, 3, 1, 1, true),
      LayerSpec::leaky_relu(),
      LayerSpec::conv(wide, narrow, 2, 1, 1, true),
      LayerSpec::leaky_relu(),
      LayerSpec::conv(narrow, 1, 2, 1, 1, true, false),
  };
}

std::vector<LayerSpec> point_critic_spec(int dim, int hidden) {
  return {
      LayerSpec::linear(dim, hidden, true),    LayerSpec::leaky_relu(),
      LayerSpec::linear(hidden, hidden, true), LayerSpec::leaky_relu(),
      LayerSpec::linear(hidden, 1, true, false),
  };
}

std::vector<LayerSpec> point_classifier_spec(int dim, int hidden) {
  return {
      LayerSpec::linear(dim, hidden),    LayerSpec::leaky_relu(),
      LayerSpec::linear(hidden, hidden), LayerSpec::leaky_relu(),
      LayerSpec::linear(hidden, 1),
  };
}

std::vector<LayerSpec> domain_classifier_spec(int in_channels) {
  auto specs = global_critic_spec(CriticVariant::kDesk, in_channels);
  for (auto& s : specs) {
    s.spectral_norm = false;
    if (s.kind == LayerKind::kConv) s.bias = true;
  }
  return specs;
}

namespace {

int first_input_width(const Network& net) {
  for (const auto& l : net.layers()) {
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kLinear) {
      return l.in_channels;
    }
  }
  return -1;
}

void require_channels(const Network& critic, const Tensor& features,
                      const char* what) {
  const int expected = first_input_width(critic);
  if (features.rank() < 2 || features.dim(1) != expected) {
    throw ShapeError(std::string(what) + ": critic expects " +
                     std::to_string(expected) +
                     " input channels, features are " +
                     shape_to_string(features.shape()));
  }
}

Tensor labelled_bce(Network& classifier, const Tensor& features_s,
                    const Tensor& features_t, double label_s, double label_t) {
  Tensor logits_s = classifier.forward(features_s);
  Tensor logits_t = classifier.forward(features_t);
  Tensor flat_s = reshape(logits_s, {static_cast<int>(logits_s.numel())});
  Tensor flat_t = reshape(logits_t, {static_cast<int>(logits_t.numel())});
  const Tensor both[] = {flat_s, flat_t};
  Tensor logits = concat(both);
  std::vector<double> targets(logits_s.numel(), label_s);
  targets.insert(targets.end(), logits_t.numel(), label_t);
  return sigmoid_bce(logits, targets);
}

}  // namespace

CriticOutput global_critic_forward(Network& critic, const Tensor& features,
                                   bool update_spectral_norm) {
  require_channels(critic, features, "global_critic_forward");
  return {critic.forward(features, {update_spectral_norm})};
}

CriticOutput local_critic_forward(Network& critic, const Tensor& roi_features,
                                  bool update_spectral_norm,
                                  bool reverse_gradient) {
  require_channels(critic, roi_features, "local_critic_forward");
  Tensor input =
      reverse_gradient ? gradient_reversal(roi_features) : roi_features;
  return {critic.forward(input, {update_spectral_norm})};
}

Tensor critic_loss(const CriticOutput& source, const CriticOutput& target) {
  return sub(mean(target.patch_scores), mean(source.patch_scores));
}

Tensor generator_loss(const CriticOutput& target) {
  return neg(mean(target.patch_scores));
}

Tensor local_alignment_loss(const CriticOutput& source,
                            const CriticOutput& target) {
  return critic_loss(source, target);
}

WEstimate w_estimate(const Tensor& critic_loss_value, std::int64_t step) {
  return {-critic_loss_value.item(), step};
}

Tensor ce_domain_classifier_loss(Network& classifier, const Tensor& features_s,
                                 const Tensor& features_t) {
  return labelled_bce(classifier, features_s, features_t, 1.0, 0.0);
}

Tensor ce_generator_loss(Network& classifier, const Tensor& features_s,
                         const Tensor& features_t) {
  return labelled_bce(classifier, features_s, features_t, 0.0, 1.0);
}

Tensor ce_reversal_generator_loss(Network& classifier,
                                  const Tensor& features_s,
                                  const Tensor& features_t) {
  return neg(ce_domain_classifier_loss(classifier, features_s, features_t));
}

namespace {

Tensor take_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const int d = x.dim(1);
  std::vector<double> out;
  out.reserve(rows.size() * d);
  const auto v = x.data();
  for (std::size_t r : rows) {
    out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(r * d),
               v.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
  }
  return Tensor({static_cast<int>(rows.size()), d}, std::move(out));
}

std::vector<std::size_t> draw_rows(Rng& rng, std::size_t n, int batch) {
  std::vector<std::size_t> rows(batch);
  for (auto& r : rows) r = rng.below(n);
  return rows;
}

void require_points(const Tensor& source, const Tensor& target) {
  if (source.rank() != 2 || source.shape() != target.shape() ||
      source.dim(0) == 0) {
    throw ShapeError("point samples must be equal non-empty [N, D] tensors, "
                     "got " + shape_to_string(source.shape()) + " and " +
                     shape_to_string(target.shape()));
  }
}

// Mean over rows of the row-wise gradient norm, scaled by `terms` so that
// the result is per-sample rather than divided by the loss's mean.
double mean_row_norm(std::span<const double> grad, int rows, int dim,
                     double terms) {
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double g = grad[static_cast<std::size_t>(i) * dim + k];
      sq += g * g;
    }
    total += std::sqrt(sq) * terms;
  }
  return total / rows;
}

}  // namespace

double point_w_estimate(Network& critic, const Tensor& source,
                        const Tensor& target) {
  NoGradGuard no_grad;
  return -critic_loss({critic.forward(source)}, {critic.forward(target)})
              .item();
}

PointCriticResult train_point_critic(const Tensor& source,
                                     const Tensor& target,
                                     const PointCriticOptions& options) {
  require_points(source, target);
  PointCriticResult result;
  result.critic = build_network(
      "point_critic", point_critic_spec(source.dim(1), options.hidden),
      options.seed);
  Network& critic = result.critic;
  std::vector<Tensor> params = critic.parameter_tensors();
  AdamState adam = make_adam_state(
      params, {options.lr, options.beta1, options.beta2, 1e-8});
  Rng rng({options.seed, 0xc7171cULL});
  const auto n = static_cast<std::size_t>(source.dim(0));
  for (int step = 1; step <= options.steps; ++step) {
    const auto rs = draw_rows(rng, n, options.batch);
    const auto rt = draw_rows(rng, n, options.batch);
    CriticOutput s{critic.forward(take_rows(source, rs), {true})};
    CriticOutput t{critic.forward(take_rows(target, rt))};
    critic_loss(s, t).backward();
    adam_step(params, adam);
    critic.zero_grad();
    if (step % options.eval_every == 0 || step == options.steps) {
      result.trace.emplace_back(step, point_w_estimate(critic, source, target));
    }
  }
  result.estimate = point_w_estimate(critic, source, target);
  return result;
}

GradientContrast generator_gradient_contrast(const Tensor& source,
                                             const Tensor& target,
                                             const PointCriticOptions& options,
                                             double ce_target_loss,
                                             int max_ce_steps) {
  require_points(source, target);
  GradientContrast out;
  const int n = source.dim(0);
  const int dim = source.dim(1);

  Network classifier = build_network(
      "point_classifier", point_classifier_spec(dim, options.hidden),
      options.seed ^ 0xce11ULL);
  std::vector<Tensor> params = classifier.parameter_tensors();
  AdamState adam =
      make_adam_state(params, {options.lr, 0.5, options.beta2, 1e-8});
  auto full_loss = [&] {
    NoGradGuard no_grad;
    return ce_domain_classifier_loss(classifier, source, target).item();
  };
  out.ce_classifier_loss = full_loss();
  while (out.ce_classifier_loss >= ce_target_loss &&
         out.ce_steps < max_ce_steps) {
    ce_domain_classifier_loss(classifier, source, target).backward();
    adam_step(params, adam);
    classifier.zero_grad();
    ++out.ce_steps;
    out.ce_classifier_loss = full_loss();
  }
  classifier.set_trainable(false);

  PointCriticResult w = train_point_critic(source, target, options);
  w.critic.set_trainable(false);
  out.w_estimate = w.estimate;

  auto grad_norm = [&](auto&& loss_of, double terms) {
    Tensor xt(target.shape(),
              std::vector<double>(target.data().begin(), target.data().end()),
              true);
    loss_of(xt).backward();
    return mean_row_norm(xt.grad(), n, dim, terms);
  };
  out.ce_reversal_grad = grad_norm(
      [&](const Tensor& xt) {
        return ce_reversal_generator_loss(classifier, source, xt);
      },
      2.0 * n);
  out.ce_reversed_label_grad = grad_norm(
      [&](const Tensor& xt) {
        return ce_generator_loss(classifier, source, xt);
      },
      2.0 * n);
  out.wasserstein_grad = grad_norm(
      [&](const Tensor& xt) {
        return generator_loss({w.critic.forward(xt)});
      },
      n);
  return out;
}

double exact_w1_sorted(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || x.size() != y.size()) {
    throw std::invalid_argument(
        "exact_w1_sorted: samples must be non-empty and of equal size (got " +
        std::to_string(x.size()) + " and " + std::to_string(y.size()) + ")");
  }
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) total += std::abs(xs[i] - ys[i]);
  return total / static_cast<double>(xs.size());
}

}  // namespace wdda
