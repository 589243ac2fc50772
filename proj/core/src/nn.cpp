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

#include "wdda/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wdda/ops.hpp"
#include "wdda/rng.hpp"

namespace wdda {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kLeakyRelu: return "leakyrelu";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kGrl: return "grl";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv(int in, int out, int kernel, int stride, int pad,
                          bool spectral_norm, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  s.spectral_norm = spectral_norm;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::max_pool(int kernel, int stride, int pad) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  s.bias = false;
  return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec s;
  s.kind = LayerKind::kLeakyRelu;
  s.slope = slope;
  s.bias = false;
  return s;
}

LayerSpec LayerSpec::linear(int in, int out, bool spectral_norm, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::kLinear;
  s.in_channels = in;
  s.out_channels = out;
  s.spectral_norm = spectral_norm;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::grl() {
  LayerSpec s;
  s.kind = LayerKind::kGrl;
  s.bias = false;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  s.bias = false;
  return s;
}

namespace {

struct MatrixView {
  const double* data;
  int rows;  // output dimension
  int cols;
  WeightLayout layout;

  double at(int r, int c) const {
    return layout == WeightLayout::kOutFirst
               ? data[static_cast<std::size_t>(r) * cols + c]
               : data[static_cast<std::size_t>(c) * rows + r];
  }

  // out[cols] = W^T u
  void mul_t(const std::vector<double>& u, std::vector<double>& out) const {
    out.assign(cols, 0.0);
    for (int r = 0; r < rows; ++r) {
      const double ur = u[r];
      for (int c = 0; c < cols; ++c) out[c] += at(r, c) * ur;
    }
  }

  // out[rows] = W v
  void mul(const std::vector<double>& v, std::vector<double>& out) const {
    out.assign(rows, 0.0);
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) s += at(r, c) * v[c];
      out[r] = s;
    }
  }
};

MatrixView view_of(const Tensor& weight, WeightLayout layout) {
  if (weight.rank() < 2) {
    throw ShapeError("spectral_normalize: weight must have rank >= 2, got " +
                     shape_to_string(weight.shape()));
  }
  if (layout == WeightLayout::kOutLast) {
    if (weight.rank() != 2) {
      throw ShapeError("spectral_normalize: out-last layout needs a matrix");
    }
    return {weight.data().data(), weight.dim(1), weight.dim(0), layout};
  }
  const int rows = weight.dim(0);
  const int cols = rows == 0 ? 0 : static_cast<int>(weight.numel() / rows);
  return {weight.data().data(), rows, cols, layout};
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void scale_in_place(std::vector<double>& v, double f) {
  for (double& x : v) x *= f;
}

std::vector<double> random_unit(Rng& rng, int n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  const double nv = norm2(v);
  if (nv > 0) scale_in_place(v, 1.0 / nv);
  return v;
}

}  // namespace

SpectralNormResult spectral_normalize(const Tensor& weight,
                                      SpectralNormState& state, bool update,
                                      WeightLayout layout) {
  const MatrixView w = view_of(weight, layout);
  if (state.u.empty()) {
    state.u.assign(w.rows, 1.0 / std::sqrt(static_cast<double>(w.rows)));
  }
  if (static_cast<int>(state.u.size()) != w.rows) {
    throw ShapeError("spectral_normalize: state vector has length " +
                     std::to_string(state.u.size()) + ", weight has " +
                     std::to_string(w.rows) + " outputs");
  }
  std::vector<double> v, wv;
  if (update) {
    for (int it = 0; it < std::max(1, state.n_power_iter); ++it) {
      w.mul_t(state.u, v);
      const double nv = norm2(v);
      if (nv == 0.0) break;
      scale_in_place(v, 1.0 / nv);
      w.mul(v, wv);
      const double nu = norm2(wv);
      if (nu == 0.0) break;
      scale_in_place(wv, 1.0 / nu);
      state.u = wv;
    }
    round_to_float(state.u);
  }
  w.mul_t(state.u, v);
  const double sigma = norm2(v);
  if (sigma == 0.0) return {weight, 0.0};
  return {scale(weight, 1.0 / sigma), sigma};
}

double largest_singular_value(const Tensor& weight, WeightLayout layout,
                              int restarts, double tolerance,
                              std::uint64_t seed) {
  const MatrixView w = view_of(weight, layout);
  // Dense copy in (rows x cols) order, independent of the layer path.
  std::vector<double> m(static_cast<std::size_t>(w.rows) * w.cols);
  for (int r = 0; r < w.rows; ++r) {
    for (int c = 0; c < w.cols; ++c) {
      m[static_cast<std::size_t>(r) * w.cols + c] = w.at(r, c);
    }
  }
  auto gram_apply = [&](const std::vector<double>& x) {
    std::vector<double> y(w.rows, 0.0), z(w.cols, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < w.cols; ++c)
        s += m[static_cast<std::size_t>(r) * w.cols + c] * x[c];
      y[r] = s;
    }
    for (int r = 0; r < w.rows; ++r) {
      for (int c = 0; c < w.cols; ++c)
        z[c] += m[static_cast<std::size_t>(r) * w.cols + c] * y[r];
    }
    return z;
  };
  Rng rng(seed);
  double best = 0.0;
  for (int restart = 0; restart < restarts; ++restart) {
    std::vector<double> x = random_unit(rng, w.cols);
    double lambda = 0.0;
    for (int it = 0; it < 200000; ++it) {
      std::vector<double> z = gram_apply(x);
      double rq = 0.0;
      for (int c = 0; c < w.cols; ++c) rq += z[c] * x[c];
      lambda = rq;
      double resid = 0.0;
      for (int c = 0; c < w.cols; ++c) {
        const double d = z[c] - rq * x[c];
        resid += d * d;
      }
      const double nz = norm2(z);
      if (nz == 0.0) break;
      if (std::sqrt(resid) <= tolerance * std::max(rq, 1e-300)) break;
      scale_in_place(z, 1.0 / nz);
      x = std::move(z);
    }
    best = std::max(best, std::sqrt(std::max(lambda, 0.0)));
  }
  return best;
}

Network build_network(std::string name, std::vector<LayerSpec> specs,
                      std::uint64_t seed) {
  Network net;
  net.name_ = std::move(name);
  int channels = -1;
  int features = -1;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    const std::string where =
        net.name_ + " layer " + std::to_string(i) + " (" +
        layer_kind_name(s.kind) + ")";
    switch (s.kind) {
      case LayerKind::kConv:
        if (s.in_channels < 1 || s.out_channels < 1 || s.kernel < 1 ||
            s.stride < 1 || s.pad < 0) {
          throw std::invalid_argument(where + ": invalid hyperparameters");
        }
        if (channels != -1 && channels != s.in_channels) {
          throw std::invalid_argument(
              where + ": expects " + std::to_string(s.in_channels) +
              " input channels but previous layer yields " +
              std::to_string(channels));
        }
        channels = s.out_channels;
        break;
      case LayerKind::kLinear:
        if (s.in_channels < 1 || s.out_channels < 1) {
          throw std::invalid_argument(where + ": invalid feature counts");
        }
        if (features != -1 && features != s.in_channels) {
          throw std::invalid_argument(
              where + ": expects " + std::to_string(s.in_channels) +
              " input features but previous layer yields " +
              std::to_string(features));
        }
        features = s.out_channels;
        break;
      case LayerKind::kFlatten:
        channels = -1;
        features = -1;
        break;
      case LayerKind::kMaxPool:
        if (s.kernel < 1 || s.stride < 1 || s.pad < 0) {
          throw std::invalid_argument(where + ": invalid hyperparameters");
        }
        break;
      case LayerKind::kLeakyRelu:
        if (!(s.slope > 0.0 && s.slope <= 1.0)) {
          throw std::invalid_argument(where + ": slope must be in (0, 1]");
        }
        break;
      case LayerKind::kGrl:
        break;
    }
  }

  net.layers_ = std::move(specs);
  const std::size_t n = net.layers_.size();
  net.weight_index_.assign(n, -1);
  net.bias_index_.assign(n, -1);
  net.sn_.assign(n, {});
  net.trainable_.assign(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& s = net.layers_[i];
    if (!s.has_weights()) continue;
    Rng rng({seed, static_cast<std::uint64_t>(i), 0x5eedULL});
    Shape wshape;
    int fan_in;
    if (s.kind == LayerKind::kConv) {
      wshape = {s.out_channels, s.in_channels, s.kernel, s.kernel};
      fan_in = s.in_channels * s.kernel * s.kernel;
    } else {
      wshape = {s.in_channels, s.out_channels};
      fan_in = s.in_channels;
    }
    const double stddev = std::sqrt(2.0 / fan_in);
    std::vector<double> w(shape_numel(wshape));
    for (double& x : w) x = rng.normal() * stddev;
    round_to_float(w);
    const std::string prefix = net.name_ + "." + std::to_string(i);
    net.weight_index_[i] = static_cast<int>(net.params_.size());
    net.params_.push_back(
        {prefix + ".weight", Tensor(std::move(wshape), std::move(w), true)});
    if (s.bias) {
      net.bias_index_[i] = static_cast<int>(net.params_.size());
      net.params_.push_back(
          {prefix + ".bias", Tensor::zeros({s.out_channels}, true)});
    }
    if (s.spectral_norm) {
      net.sn_[i].u = random_unit(rng, s.out_channels);
      round_to_float(net.sn_[i].u);
    }
  }
  return net;
}

Network::Network(const Network& other)
    : name_(other.name_),
      layers_(other.layers_),
      params_(other.params_),
      weight_index_(other.weight_index_),
      bias_index_(other.bias_index_),
      sn_(other.sn_),
      trainable_(other.trainable_) {
  for (auto& p : params_) p.tensor = p.tensor.clone();
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

Network clone_network(const Network& source, std::string new_name) {
  Network net = source;
  if (!new_name.empty() && new_name != source.name_) {
    for (auto& p : net.params_) {
      p.name = new_name + p.name.substr(source.name_.size());
    }
    net.name_ = std::move(new_name);
  }
  return net;
}

Tensor Network::forward(const Tensor& input, const ForwardOptions& options) {
  Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& s = layers_[i];
    switch (s.kind) {
      case LayerKind::kConv:
      case LayerKind::kLinear: {
        Tensor w = params_[weight_index_[i]].tensor;
        Tensor b = bias_index_[i] >= 0 ? params_[bias_index_[i]].tensor
                                       : Tensor();
        if (s.spectral_norm) {
          w = spectral_normalize(w, sn_[i], options.update_spectral_norm,
                                 s.kind == LayerKind::kConv
                                     ? WeightLayout::kOutFirst
                                     : WeightLayout::kOutLast)
                  .weight;
        }
        if (s.kind == LayerKind::kConv) {
          x = conv2d(x, w, b, s.stride, s.pad);
        } else {
          x = linear(x, w, b);
        }
        break;
      }
      case LayerKind::kMaxPool:
        x = max_pool2d(x, s.kernel, s.stride, s.pad);
        break;
      case LayerKind::kLeakyRelu:
        x = leaky_relu(x, s.slope);
        break;
      case LayerKind::kGrl:
        x = gradient_reversal(x);
        break;
      case LayerKind::kFlatten:
        x = flatten(x);
        break;
    }
  }
  return x;
}

Shape Network::output_shape(const Shape& input) const {
  Shape s = input;
  auto extent = [](int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
  };
  for (const LayerSpec& l : layers_) {
    switch (l.kind) {
      case LayerKind::kConv:
        if (s.size() != 4 || s[1] != l.in_channels) {
          throw ShapeError(name_ + ": conv expects [N," +
                           std::to_string(l.in_channels) + ",H,W], got " +
                           shape_to_string(s));
        }
        s = {s[0], l.out_channels, extent(s[2], l.kernel, l.stride, l.pad),
             extent(s[3], l.kernel, l.stride, l.pad)};
        break;
      case LayerKind::kMaxPool:
        if (s.size() != 4) throw ShapeError(name_ + ": maxpool expects NCHW");
        s = {s[0], s[1], extent(s[2], l.kernel, l.stride, l.pad),
             extent(s[3], l.kernel, l.stride, l.pad)};
        break;
      case LayerKind::kLinear:
        if (s.size() != 2 || s[1] != l.in_channels) {
          throw ShapeError(name_ + ": linear expects [N," +
                           std::to_string(l.in_channels) + "], got " +
                           shape_to_string(s));
        }
        s = {s[0], l.out_channels};
        break;
      case LayerKind::kFlatten: {
        int rest = 1;
        for (std::size_t i = 1; i < s.size(); ++i) rest *= s[i];
        s = {s[0], rest};
        break;
      }
      case LayerKind::kLeakyRelu:
      case LayerKind::kGrl:
        break;
    }
  }
  return s;
}

std::vector<Tensor> Network::parameter_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

std::vector<Tensor> Network::trainable_parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!trainable_[i]) continue;
    if (weight_index_[i] >= 0) out.push_back(params_[weight_index_[i]].tensor);
    if (bias_index_[i] >= 0) out.push_back(params_[bias_index_[i]].tensor);
  }
  return out;
}

Tensor& Network::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw std::out_of_range(name_ + ": no parameter named " + std::string(name));
}

std::string Network::spectral_state_name(std::size_t layer) const {
  return name_ + "." + std::to_string(layer) + ".sn_u";
}

void Network::set_trainable(bool trainable) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    set_layer_trainable(i, trainable);
  }
}

void Network::set_layer_trainable(std::size_t layer, bool trainable) {
  trainable_.at(layer) = trainable;
  if (weight_index_[layer] >= 0) {
    params_[weight_index_[layer]].tensor.set_requires_grad(trainable);
  }
  if (bias_index_[layer] >= 0) {
    params_[bias_index_[layer]].tensor.set_requires_grad(trainable);
  }
}

bool Network::layer_trainable(std::size_t layer) const {
  return trainable_.at(layer);
}

void Network::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor Network::normalized_weight(std::size_t layer) {
  const LayerSpec& s = layers_.at(layer);
  if (!s.spectral_norm) {
    throw std::invalid_argument(name_ + ": layer " + std::to_string(layer) +
                                " is not spectrally normalized");
  }
  NoGradGuard no_grad;
  return spectral_normalize(params_[weight_index_[layer]].tensor, sn_[layer],
                            false,
                            s.kind == LayerKind::kConv
                                ? WeightLayout::kOutFirst
                                : WeightLayout::kOutLast)
      .weight;
}

Tensor grl_forward(const Tensor& x) { return gradient_reversal(x); }

std::vector<double> grl_backward(std::span<const double> upstream) {
  std::vector<double> out(upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) out[i] = -upstream[i];
  return out;
}

AdamState make_adam_state(const std::vector<Tensor>& params,
                          const AdamOptions& options) {
  AdamState state;
  state.options = options;
  for (const Tensor& p : params) {
    state.m.emplace_back(p.numel(), 0.0);
    state.v.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(std::vector<Tensor>& params,
               const std::vector<std::vector<double>>& grads,
               AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) +
                     " parameters, " + std::to_string(grads.size()) +
                     " gradients, " + std::to_string(state.m.size()) +
                     " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() ||
        state.m[i].size() != params[i].numel() ||
        state.v[i].size() != params[i].numel()) {
      throw ShapeError("adam_step: size mismatch for parameter " +
                       std::to_string(i) + " " +
                       shape_to_string(params[i].shape()));
    }
  }
  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
    round_to_float(p);
    round_to_float(m);
    round_to_float(v);
  }
}

std::vector<std::vector<double>> collect_grads(
    const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.numel(), 0.0);
    }
  }
  return grads;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  adam_step(params, collect_grads(params), state);
}

double clip_grad_norm(std::vector<std::vector<double>>& grads,
                      double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g) x *= f;
    }
  }
  return norm;
}

}  // namespace wdda
