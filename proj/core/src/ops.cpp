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

#include "wdda/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace wdda {

namespace {

using Impl = detail::TensorImpl;
using ImplPtr = std::shared_ptr<Impl>;
using BackwardFn = std::function<void(Impl&)>;

Tensor make_output(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   const char* op, BackwardFn fn) {
  check_finite(data, op);
  auto out = std::make_shared<Impl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor* in : inputs) {
      if (in->defined() && in->requires_grad()) needs_grad = true;
    }
  }
  if (needs_grad) {
    out->requires_grad = true;
    for (const Tensor* in : inputs) {
      if (in->defined()) out->inputs.push_back(in->impl());
    }
    out->backward_fn = std::move(fn);
    out->op = op;
  }
  return Tensor(std::move(out));
}

// Gradient buffer of `in`, or nullptr when it does not take gradients.
std::vector<double>* grad_of(const ImplPtr& in) {
  if (!in || !in->requires_grad) return nullptr;
  return &in->ensure_grad();
}

void require_rank(const Tensor& t, int rank, const char* op,
                  const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// C[M x N] += A[M x K] * B[K x N], all row-major.
void gemm_nn(int m, int n, int k, const double* a, const double* b,
             double* c) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[K x N] += A[M x K]^T * B[M x N].
void gemm_tn(int m, int n, int k, const double* a, const double* b,
             double* c) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose(int rows, int cols, const double* src, double* dst) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      dst[static_cast<std::size_t>(c) * rows + r] =
          src[static_cast<std::size_t>(r) * cols + c];
    }
  }
}

struct ConvGeometry {
  int channels, height, width, kh, kw, stride, pad, out_h, out_w;
  int patch() const { return channels * kh * kw; }
  int positions() const { return out_h * out_w; }
};

// cols is [C*kh*kw, out_h*out_w].
void im2col(const ConvGeometry& g, const double* img, double* cols) {
  const int positions = g.positions();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* row =
            cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) *
                       positions;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src =
              img + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* img) {
  const int positions = g.positions();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* row =
            cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) *
                       positions;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.height) continue;
          double* dst =
              img + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
          const double* src = row + oh * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

int pooled_extent(int in, int kernel, int stride, int pad, const char* op,
                  const char* axis) {
  if (stride < 1) {
    throw ShapeError(std::string(op) + ": stride must be >= 1");
  }
  if (pad < 0) throw ShapeError(std::string(op) + ": negative padding");
  if (kernel < 1 || kernel > in + 2 * pad) {
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(kernel) +
                     " does not fit padded " + axis + " extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

std::vector<int> normalize_axes(std::span<const int> axes, int rank,
                                const char* op) {
  std::vector<int> out;
  for (int a : axes) {
    int axis = a < 0 ? a + rank : a;
    if (axis < 0 || axis >= rank) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(a) +
                       " out of range for rank " + std::to_string(rank));
    }
    if (std::find(out.begin(), out.end(), axis) != out.end()) {
      throw ShapeError(std::string(op) + ": duplicate axis " +
                       std::to_string(a));
    }
    out.push_back(axis);
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_output(a.shape(), std::move(out), {&a, &b}, "add",
                     [ai, bi](Impl& o) {
                       for (const ImplPtr* in : {&ai, &bi}) {
                         if (auto* g = grad_of(*in)) {
                           for (std::size_t i = 0; i < g->size(); ++i)
                             (*g)[i] += o.grad[i];
                         }
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_output(a.shape(), std::move(out), {&a, &b}, "sub",
                     [ai, bi](Impl& o) {
                       if (auto* g = grad_of(ai)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] += o.grad[i];
                       }
                       if (auto* g = grad_of(bi)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] -= o.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_output(a.shape(), std::move(out), {&a, &b}, "mul",
                     [ai, bi](Impl& o) {
                       if (auto* g = grad_of(ai)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] += o.grad[i] * bi->data[i];
                       }
                       if (auto* g = grad_of(bi)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] += o.grad[i] * ai->data[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  ImplPtr ai = a.impl();
  return make_output(a.shape(), std::move(out), {&a}, "scale",
                     [ai, factor](Impl& o) {
                       if (auto* g = grad_of(ai)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] += factor * o.grad[i];
                       }
                     });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) +
                     " as " + shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  ImplPtr ai = a.impl();
  return make_output(std::move(shape), std::move(out), {&a}, "reshape",
                     [ai](Impl& o) {
                       if (auto* g = grad_of(ai)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] += o.grad[i];
                       }
                     });
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("flatten: scalar input");
  const int n = a.dim(0);
  const int rest = n == 0 ? 0 : static_cast<int>(a.numel() / n);
  return reshape(a, {n, rest});
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  int total = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    if (p.rank() < 1 ||
        Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat: trailing extents differ: " +
                       shape_to_string(parts[0].shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    total += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{total};
  shape.insert(shape.end(), tail.begin(), tail.end());

  auto out_impl = std::make_shared<Impl>();
  check_finite(out, "concat");
  out_impl->shape = std::move(shape);
  out_impl->data = std::move(out);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor& p : parts) needs_grad |= p.requires_grad();
  }
  if (needs_grad) {
    std::vector<ImplPtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    out_impl->requires_grad = true;
    out_impl->inputs = ins;
    out_impl->op = "concat";
    out_impl->backward_fn = [ins](Impl& o) {
      std::size_t offset = 0;
      for (const ImplPtr& in : ins) {
        if (auto* g = grad_of(in)) {
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += o.grad[offset + i];
        }
        offset += in->data.size();
      }
    };
  }
  return Tensor(std::move(out_impl));
}

Tensor gather(const Tensor& a, std::span<const std::size_t> flat_indices) {
  std::vector<double> out(flat_indices.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= ad.size()) {
      throw ShapeError("gather: index " + std::to_string(flat_indices[i]) +
                       " out of range for " + shape_to_string(a.shape()));
    }
    out[i] = ad[flat_indices[i]];
  }
  ImplPtr ai = a.impl();
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  Shape shape{static_cast<int>(idx.size())};
  return make_output(std::move(shape), std::move(out), {&a},
                     "gather", [ai, idx = std::move(idx)](Impl& o) {
                       if (auto* g = grad_of(ai)) {
                         for (std::size_t i = 0; i < idx.size(); ++i)
                           (*g)[idx[i]] += o.grad[i];
                       }
                     });
}

Tensor gradient_reversal(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  ImplPtr ai = a.impl();
  return make_output(a.shape(), std::move(out), {&a}, "gradient_reversal",
                     [ai](Impl& o) {
                       if (auto* g = grad_of(ai)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] -= o.grad[i];
                       }
                     });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c_in) {
    throw ShapeError("conv2d: input channel dimension is " +
                     std::to_string(c_in) + " but kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(c_out) +
                     "], got " + shape_to_string(bias.shape()));
  }
  ConvGeometry g{c_in, h, w, kh, kw, stride, pad, 0, 0};
  g.out_h = pooled_extent(h, kh, stride, pad, "conv2d", "height");
  g.out_w = pooled_extent(w, kw, stride, pad, "conv2d", "width");

  const int patch = g.patch(), positions = g.positions();
  const std::size_t cols_per_image =
      static_cast<std::size_t>(patch) * positions;
  const std::size_t out_per_image =
      static_cast<std::size_t>(c_out) * positions;
  const std::size_t in_per_image = static_cast<std::size_t>(c_in) * h * w;

  auto cols = std::make_shared<std::vector<double>>(cols_per_image * n);
  std::vector<double> out(out_per_image * n, 0.0);
  auto x = input.data();
  auto k = kernel.data();
  for (int b = 0; b < n; ++b) {
    double* col = cols->data() + cols_per_image * b;
    im2col(g, x.data() + in_per_image * b, col);
    double* y = out.data() + out_per_image * b;
    if (bias.defined()) {
      for (int co = 0; co < c_out; ++co) {
        std::fill(y + static_cast<std::size_t>(co) * positions,
                  y + static_cast<std::size_t>(co + 1) * positions,
                  bias.data()[co]);
      }
    }
    gemm_nn(c_out, positions, patch, k.data(), col, y);
  }

  ImplPtr xi = input.impl(), ki = kernel.impl(), bi = bias.impl();
  return make_output(
      {n, c_out, g.out_h, g.out_w}, std::move(out), {&input, &kernel, &bias},
      "conv2d",
      [xi, ki, bi, cols, g, n, c_out, patch, positions, cols_per_image,
       out_per_image, in_per_image](Impl& o) {
        auto* gx = grad_of(xi);
        auto* gk = grad_of(ki);
        auto* gb = grad_of(bi);
        std::vector<double> cols_t;
        std::vector<double> dcols;
        if (gk) cols_t.resize(cols_per_image);
        if (gx) dcols.resize(cols_per_image);
        for (int b = 0; b < n; ++b) {
          const double* dy = o.grad.data() + out_per_image * b;
          if (gb) {
            for (int co = 0; co < c_out; ++co) {
              double s = 0.0;
              for (int p = 0; p < positions; ++p)
                s += dy[static_cast<std::size_t>(co) * positions + p];
              (*gb)[co] += s;
            }
          }
          if (gk) {
            transpose(patch, positions, cols->data() + cols_per_image * b,
                      cols_t.data());
            gemm_nn(c_out, patch, positions, dy, cols_t.data(), gk->data());
          }
          if (gx) {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            gemm_tn(c_out, positions, patch, ki->data.data(), dy,
                    dcols.data());
            col2im(g, dcols.data(), gx->data() + in_per_image * b);
          }
        }
      });
}

Tensor max_pool2d(const Tensor& input, int kernel, int stride, int pad) {
  require_rank(input, 4, "max_pool2d", "input");
  check_finite(input.data(), "max_pool2d input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  if (2 * pad > kernel) {
    throw ShapeError("max_pool2d: pad " + std::to_string(pad) +
                     " exceeds half the kernel " + std::to_string(kernel));
  }
  const int oh = pooled_extent(h, kernel, stride, pad, "max_pool2d", "height");
  const int ow = pooled_extent(w, kernel, stride, pad, "max_pool2d", "width");
  const std::size_t out_n = static_cast<std::size_t>(n) * c * oh * ow;
  std::vector<double> out(out_n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out_n);
  auto x = input.data();
  std::size_t o = 0;
  for (int plane = 0; plane < n * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = base;
        bool found = false;
        for (int di = 0; di < kernel; ++di) {
          const int r = i * stride - pad + di;
          if (r < 0 || r >= h) continue;
          for (int dj = 0; dj < kernel; ++dj) {
            const int col = j * stride - pad + dj;
            if (col < 0 || col >= w) continue;
            const std::size_t idx = base + static_cast<std::size_t>(r) * w + col;
            if (!found || x[idx] > best) {
              best = x[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        out[o] = best;
        (*argmax)[o] = best_idx;
      }
    }
  }
  ImplPtr xi = input.impl();
  return make_output({n, c, oh, ow}, std::move(out), {&input}, "max_pool2d",
                     [xi, argmax](Impl& o) {
                       if (auto* g = grad_of(xi)) {
                         for (std::size_t i = 0; i < argmax->size(); ++i)
                           (*g)[(*argmax)[i]] += o.grad[i];
                       }
                     });
}

Tensor leaky_relu(const Tensor& input, double slope) {
  if (!(slope > 0.0 && slope <= 1.0)) {
    throw std::invalid_argument("leaky_relu: slope must be in (0, 1]");
  }
  auto x = input.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
  }
  ImplPtr xi = input.impl();
  return make_output(input.shape(), std::move(out), {&input}, "leaky_relu",
                     [xi, slope](Impl& o) {
                       if (auto* g = grad_of(xi)) {
                         for (std::size_t i = 0; i < g->size(); ++i) {
                           (*g)[i] += xi->data[i] >= 0.0 ? o.grad[i]
                                                         : slope * o.grad[i];
                         }
                       }
                     });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const int n = input.dim(0), d = input.dim(1), k = weight.dim(1);
  if (weight.dim(0) != d) {
    throw ShapeError("linear: input has " + std::to_string(d) +
                     " features but weight expects " +
                     std::to_string(weight.dim(0)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != k)) {
    throw ShapeError("linear: bias must be [" + std::to_string(k) + "], got " +
                     shape_to_string(bias.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(n) * k, 0.0);
  if (bias.defined()) {
    for (int r = 0; r < n; ++r) {
      std::copy(bias.data().begin(), bias.data().end(),
                out.begin() + static_cast<std::size_t>(r) * k);
    }
  }
  gemm_nn(n, k, d, input.data().data(), weight.data().data(), out.data());
  ImplPtr xi = input.impl(), wi = weight.impl(), bi = bias.impl();
  return make_output(
      {n, k}, std::move(out), {&input, &weight, &bias}, "linear",
      [xi, wi, bi, n, d, k](Impl& o) {
        if (auto* gx = grad_of(xi)) {
          for (int r = 0; r < n; ++r) {
            const double* dy = o.grad.data() + static_cast<std::size_t>(r) * k;
            for (int c = 0; c < d; ++c) {
              const double* wr =
                  wi->data.data() + static_cast<std::size_t>(c) * k;
              double s = 0.0;
              for (int j = 0; j < k; ++j) s += dy[j] * wr[j];
              (*gx)[static_cast<std::size_t>(r) * d + c] += s;
            }
          }
        }
        if (auto* gw = grad_of(wi)) {
          gemm_tn(n, k, d, xi->data.data(), o.grad.data(), gw->data());
        }
        if (auto* gb = grad_of(bi)) {
          for (int r = 0; r < n; ++r) {
            for (int j = 0; j < k; ++j)
              (*gb)[j] += o.grad[static_cast<std::size_t>(r) * k + j];
          }
        }
      });
}

namespace {

Tensor reduce_impl(const Tensor& input, std::span<const int> axes_in,
                   bool average, const char* op) {
  const Shape& shape = input.shape();
  const int rank = static_cast<int>(shape.size());
  std::vector<int> axes = normalize_axes(axes_in, rank, op);
  std::vector<bool> reduced(rank, false);
  for (int a : axes) reduced[a] = true;

  Shape out_shape;
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    if (reduced[i]) {
      count *= static_cast<std::size_t>(shape[i]);
    } else {
      out_shape.push_back(shape[i]);
    }
  }
  // Output stride of each input axis (0 for reduced axes).
  std::vector<std::size_t> out_stride(rank, 0);
  std::size_t s = 1;
  for (int i = rank - 1; i >= 0; --i) {
    if (!reduced[i]) {
      out_stride[i] = s;
      s *= static_cast<std::size_t>(shape[i]);
    }
  }
  auto map = std::make_shared<std::vector<std::size_t>>(input.numel());
  std::vector<int> idx(rank, 0);
  for (std::size_t flat = 0; flat < input.numel(); ++flat) {
    std::size_t o = 0;
    for (int i = 0; i < rank; ++i) o += out_stride[i] * idx[i];
    (*map)[flat] = o;
    for (int i = rank - 1; i >= 0; --i) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(shape_numel(out_shape), 0.0);
  auto x = input.data();
  for (std::size_t flat = 0; flat < x.size(); ++flat) out[(*map)[flat]] += x[flat];
  const double factor =
      average ? (count == 0 ? 0.0 : 1.0 / static_cast<double>(count)) : 1.0;
  if (average) {
    for (double& v : out) v *= factor;
  }
  ImplPtr xi = input.impl();
  return make_output(std::move(out_shape), std::move(out), {&input}, op,
                     [xi, map, factor](Impl& o) {
                       if (auto* g = grad_of(xi)) {
                         for (std::size_t i = 0; i < g->size(); ++i)
                           (*g)[i] += factor * o.grad[(*map)[i]];
                       }
                     });
}

std::vector<int> all_axes(const Tensor& t) {
  std::vector<int> axes(t.rank());
  for (int i = 0; i < t.rank(); ++i) axes[i] = i;
  return axes;
}

}  // namespace

Tensor reduce_sum(const Tensor& input, std::span<const int> axes) {
  return reduce_impl(input, axes, false, "reduce_sum");
}

Tensor reduce_mean(const Tensor& input, std::span<const int> axes) {
  return reduce_impl(input, axes, true, "reduce_mean");
}

Tensor sum(const Tensor& input) {
  auto axes = all_axes(input);
  return reduce_impl(input, axes, false, "sum");
}

Tensor mean(const Tensor& input) {
  auto axes = all_axes(input);
  return reduce_impl(input, axes, true, "mean");
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  check_finite(logits.data(), "softmax_cross_entropy logits");
  const int p = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != p) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(p) +
                     " rows but " + std::to_string(labels.size()) + " labels");
  }
  auto z = logits.data();
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double total = 0.0;
  for (int r = 0; r < p; ++r) {
    if (labels[r] < 0 || labels[r] >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(labels[r]) + " not in [0, " +
                              std::to_string(k) + ")");
    }
    const double* row = z.data() + static_cast<std::size_t>(r) * k;
    const double mx = *std::max_element(row, row + k);
    double se = 0.0;
    for (int j = 0; j < k; ++j) se += std::exp(row[j] - mx);
    const double lse = mx + std::log(se);
    total += lse - row[labels[r]];
    for (int j = 0; j < k; ++j)
      (*probs)[static_cast<std::size_t>(r) * k + j] = std::exp(row[j] - lse);
  }
  const double inv = p == 0 ? 0.0 : 1.0 / p;
  ImplPtr zi = logits.impl();
  std::vector<int> lab(labels.begin(), labels.end());
  return make_output({}, {total * inv}, {&logits}, "softmax_cross_entropy",
                     [zi, probs, lab = std::move(lab), k, inv](Impl& o) {
                       if (auto* g = grad_of(zi)) {
                         const double up = o.grad[0] * inv;
                         for (std::size_t r = 0; r < lab.size(); ++r) {
                           for (int j = 0; j < k; ++j) {
                             const std::size_t i = r * k + j;
                             (*g)[i] += up * ((*probs)[i] - (j == lab[r]));
                           }
                         }
                       }
                     });
}

Tensor sigmoid_bce(const Tensor& logits, std::span<const double> targets) {
  check_finite(logits.data(), "sigmoid_bce logits");
  if (targets.size() != logits.numel()) {
    throw ShapeError("sigmoid_bce: " + std::to_string(logits.numel()) +
                     " logits but " + std::to_string(targets.size()) +
                     " targets");
  }
  auto z = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += std::max(z[i], 0.0) - z[i] * targets[i] +
             std::log1p(std::exp(-std::abs(z[i])));
  }
  const double inv = z.empty() ? 0.0 : 1.0 / static_cast<double>(z.size());
  ImplPtr zi = logits.impl();
  std::vector<double> t(targets.begin(), targets.end());
  return make_output({}, {total * inv}, {&logits}, "sigmoid_bce",
                     [zi, t = std::move(t), inv](Impl& o) {
                       if (auto* g = grad_of(zi)) {
                         const double up = o.grad[0] * inv;
                         for (std::size_t i = 0; i < t.size(); ++i) {
                           const double zv = zi->data[i];
                           const double sig =
                               zv >= 0 ? 1.0 / (1.0 + std::exp(-zv))
                                       : std::exp(zv) / (1.0 + std::exp(zv));
                           (*g)[i] += up * (sig - t[i]);
                         }
                       }
                     });
}

Tensor smooth_l1(const Tensor& pred, std::span<const double> target,
                 double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be > 0");
  if (target.size() != pred.numel()) {
    throw ShapeError("smooth_l1: " + std::to_string(pred.numel()) +
                     " predictions but " + std::to_string(target.size()) +
                     " targets");
  }
  if (pred.numel() == 0) return Tensor::scalar(0.0);
  auto x = pred.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - target[i];
    const double a = std::abs(d);
    total += a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
  }
  const double inv = 1.0 / static_cast<double>(x.size());
  ImplPtr pi = pred.impl();
  std::vector<double> t(target.begin(), target.end());
  return make_output({}, {total * inv}, {&pred}, "smooth_l1",
                     [pi, t = std::move(t), beta, inv](Impl& o) {
                       if (auto* g = grad_of(pi)) {
                         const double up = o.grad[0] * inv;
                         for (std::size_t i = 0; i < t.size(); ++i) {
                           const double d = pi->data[i] - t[i];
                           const double dd =
                               std::abs(d) < beta ? d / beta
                                                  : (d > 0 ? 1.0 : -1.0);
                           (*g)[i] += up * dd;
                         }
                       }
                     });
}

namespace {

// Half-open cell range [begin, end) covered by [lo, hi) on a grid of
// `extent` cells; falls back to the single nearest cell when empty.
std::pair<int, int> roi_cells(double lo, double hi, double scale,
                              int extent) {
  int begin = static_cast<int>(std::floor(lo * scale));
  int end = static_cast<int>(std::ceil(hi * scale));
  begin = std::clamp(begin, 0, extent);
  end = std::clamp(end, 0, extent);
  if (end <= begin) {
    const double centre = 0.5 * (lo + hi) * scale;
    const int cell =
        std::clamp(static_cast<int>(std::floor(centre)), 0, extent - 1);
    return {cell, cell + 1};
  }
  return {begin, end};
}

}  // namespace

Tensor roi_pool(const Tensor& features, std::span<const RoiRegion> rois,
                double spatial_scale, int out_h, int out_w) {
  require_rank(features, 4, "roi_pool", "features");
  check_finite(features.data(), "roi_pool features");
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("roi_pool: output size must be positive");
  }
  const int n = features.dim(0), c = features.dim(1), h = features.dim(2),
            w = features.dim(3);
  if (h < 1 || w < 1) throw ShapeError("roi_pool: empty feature map");
  const int p = static_cast<int>(rois.size());
  const std::size_t bins = static_cast<std::size_t>(out_h) * out_w;
  std::vector<double> out(static_cast<std::size_t>(p) * c * bins);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto x = features.data();
  for (int r = 0; r < p; ++r) {
    const RoiRegion& roi = rois[r];
    if (roi.batch_index < 0 || roi.batch_index >= n) {
      throw ShapeError("roi_pool: batch index " +
                       std::to_string(roi.batch_index) + " out of range");
    }
    const auto [ys, ye] = roi_cells(roi.y1, roi.y2, spatial_scale, h);
    const auto [xs, xe] = roi_cells(roi.x1, roi.x2, spatial_scale, w);
    const int len_h = ye - ys, len_w = xe - xs;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t plane =
          (static_cast<std::size_t>(roi.batch_index) * c + ch) * h * w;
      for (int bi = 0; bi < out_h; ++bi) {
        const int hs = ys + (bi * len_h) / out_h;
        const int he = ys + ((bi + 1) * len_h + out_h - 1) / out_h;
        for (int bj = 0; bj < out_w; ++bj) {
          const int ws = xs + (bj * len_w) / out_w;
          const int we = xs + ((bj + 1) * len_w + out_w - 1) / out_w;
          double best = 0.0;
          std::size_t best_idx = 0;
          bool found = false;
          for (int yy = hs; yy < he; ++yy) {
            for (int xx = ws; xx < we; ++xx) {
              const std::size_t idx = plane + static_cast<std::size_t>(yy) * w + xx;
              if (!found || x[idx] > best) {
                best = x[idx];
                best_idx = idx;
                found = true;
              }
            }
          }
          const std::size_t o =
              ((static_cast<std::size_t>(r) * c + ch) * out_h + bi) * out_w + bj;
          out[o] = best;
          (*argmax)[o] = best_idx;
        }
      }
    }
  }
  ImplPtr fi = features.impl();
  return make_output({p, c, out_h, out_w}, std::move(out), {&features},
                     "roi_pool", [fi, argmax](Impl& o) {
                       if (auto* g = grad_of(fi)) {
                         for (std::size_t i = 0; i < argmax->size(); ++i)
                           (*g)[(*argmax)[i]] += o.grad[i];
                       }
                     });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& input, double eps) {
  Tensor x = input.detach();
  x.set_requires_grad(true);
  Tensor y = f(x);
  if (y.numel() != 1) {
    throw ShapeError("grad_check: function must return a scalar");
  }
  std::vector<double> analytic(x.numel(), 0.0);
  if (y.requires_grad()) {
    y.backward();
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor plus = input.detach();
    plus.mutable_data()[i] += eps;
    Tensor minus = input.detach();
    minus.mutable_data()[i] -= eps;
    const double numeric = (f(plus).item() - f(minus).item()) / (2.0 * eps);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace wdda
