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

#ifndef WDDA_OPS_HPP_
#define WDDA_OPS_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "wdda/tensor.hpp"

namespace wdda {

// Elementwise arithmetic on equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& a);
// Concatenation along axis 0; trailing extents must agree.
Tensor concat(std::span<const Tensor> parts);
// Picks flat elements by index; result is 1-D.
Tensor gather(const Tensor& a, std::span<const std::size_t> flat_indices);

// Identity forward, negated gradient backward.
Tensor gradient_reversal(const Tensor& a);

/// 2-D convolution (cross-correlation) over NCHW input.
///
/// `kernel` is [C_out, C_in, kh, kw]; `bias` is [C_out] or undefined.
/// Output extent is floor((H + 2*pad - kh) / stride) + 1 per spatial axis.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);

// Max pooling over NCHW input; padded cells never win. Gradient goes to
// the first (row-major) maximal element of each window.
Tensor max_pool2d(const Tensor& input, int kernel, int stride, int pad);

Tensor leaky_relu(const Tensor& input, double slope = 0.2);

// input [N, D] x weight [D, K] + bias [K] (bias may be undefined).
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Reduces over the listed axes (removed from the output shape). An empty
// axis list is the identity.
Tensor reduce_sum(const Tensor& input, std::span<const int> axes);
Tensor reduce_mean(const Tensor& input, std::span<const int> axes);
Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);

// Mean over rows of -log softmax(logits)[label]; logits is [P, K].
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> labels);
// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
Tensor sigmoid_bce(const Tensor& logits, std::span<const double> targets);
// Mean of 0.5 x^2 / beta for |x| < beta, |x| - 0.5 beta otherwise, with
// x = pred - target. Zero-element input yields a constant 0.
Tensor smooth_l1(const Tensor& pred, std::span<const double> target,
                 double beta);

struct RoiRegion {
  int batch_index = 0;
  // Image-space corners; scaled by `spatial_scale` onto the feature grid.
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Quantized ROI max pooling: each region's covered cells
// [floor(x1 s), ceil(x2 s)) are split into out_h x out_w bins and each bin
// takes its maximum. Output is [P, C, out_h, out_w].
Tensor roi_pool(const Tensor& features, std::span<const RoiRegion> rois,
                double spatial_scale, int out_h, int out_w);

// Central-difference check of d f(x)/dx against autodiff. Returns the
// maximum over coordinates of |a - b| / max(|a|, |b|, 1e-8). `f` must be a
// deterministic scalar-valued function.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& input, double eps);

}  // namespace wdda

#endif  // WDDA_OPS_HPP_
