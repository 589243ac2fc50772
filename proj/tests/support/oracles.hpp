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

// Reference implementations used only by tests. Everything here is written
// as plain loops, independent of the library kernels it checks.

#ifndef WDDA_TESTS_ORACLES_HPP_
#define WDDA_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "wdda/rng.hpp"
#include "wdda/tensor.hpp"

namespace wdda::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(std::span<const double> a,
                           std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
  }
  return d;
}

// Six nested loops over (n, co, oy, ox, ci, ky, kx), zero padding.
inline std::vector<double> naive_conv2d(const Tensor& x, const Tensor& k,
                                        const Tensor& b, int stride, int pad) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  auto X = x.data();
  auto K = k.data();
  std::vector<double> out(static_cast<std::size_t>(n) * co * oh * ow);
  for (int in = 0; in < n; ++in)
    for (int o = 0; o < co; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double s = b.defined() ? b.data()[o] : 0.0;
          for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                s += X[((in * ci + c) * h + iy) * w + ix] *
                     K[((o * ci + c) * kh + ky) * kw + kx];
              }
          out[((in * co + o) * oh + oy) * ow + ox] = s;
        }
  return out;
}

inline std::vector<double> naive_max_pool(const Tensor& x, int kernel,
                                          int stride) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  std::vector<double> out;
  for (int i = 0; i < n * c; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double m = -std::numeric_limits<double>::infinity();
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            m = std::max(m, x.data()[(i * h + oy * stride + ky) * w +
                                     ox * stride + kx]);
          }
        out.push_back(m);
      }
  return out;
}

inline std::vector<double> naive_linear(const Tensor& x, const Tensor& w,
                                        const Tensor& b) {
  const int n = x.dim(0), d = x.dim(1), k = w.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      double s = b.defined() ? b.data()[j] : 0.0;
      for (int t = 0; t < d; ++t) s += x.data()[i * d + t] * w.data()[t * k + j];
      out[i * k + j] = s;
    }
  return out;
}

// Minimum mean |x_i - y_pi(i)| over every permutation pi.
inline double brute_force_w1(std::vector<double> x, std::vector<double> y) {
  std::vector<int> perm(y.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) cost += std::abs(x[i] - y[perm[i]]);
    best = std::min(best, cost / static_cast<double>(x.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Largest singular value of a dense rows x cols matrix via the eigenvalues
// of W^T W, computed with cyclic Jacobi rotations.
inline double jacobi_sigma_max(const std::vector<double>& w, int rows,
                               int cols) {
  std::vector<double> a(static_cast<std::size_t>(cols) * cols, 0.0);
  for (int i = 0; i < cols; ++i)
    for (int j = 0; j < cols; ++j) {
      double s = 0.0;
      for (int r = 0; r < rows; ++r) s += w[r * cols + i] * w[r * cols + j];
      a[i * cols + j] = s;
    }
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < cols; ++p)
      for (int q = p + 1; q < cols; ++q) off += a[p * cols + q] * a[p * cols + q];
    if (off < 1e-26) break;
    for (int p = 0; p < cols; ++p)
      for (int q = p + 1; q < cols; ++q) {
        const double apq = a[p * cols + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * cols + q] - a[p * cols + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < cols; ++k) {
          const double akp = a[k * cols + p], akq = a[k * cols + q];
          a[k * cols + p] = c * akp - s * akq;
          a[k * cols + q] = s * akp + c * akq;
        }
        for (int k = 0; k < cols; ++k) {
          const double apk = a[p * cols + k], aqk = a[q * cols + k];
          a[p * cols + k] = c * apk - s * aqk;
          a[q * cols + k] = s * apk + c * aqk;
        }
      }
  }
  double m = 0.0;
  for (int i = 0; i < cols; ++i) m = std::max(m, a[i * cols + i]);
  return std::sqrt(m);
}

}  // namespace wdda::testing

#endif  // WDDA_TESTS_ORACLES_HPP_
