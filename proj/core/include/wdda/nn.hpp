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

#ifndef WDDA_NN_HPP_
#define WDDA_NN_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wdda/tensor.hpp"

namespace wdda {

enum class LayerKind { kConv, kMaxPool, kLeakyRelu, kLinear, kGrl, kFlatten };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  // Conv: channels. Linear: input / output features.
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  double slope = 0.2;
  bool spectral_norm = false;
  bool bias = true;

  static LayerSpec conv(int in, int out, int kernel, int stride, int pad,
                        bool spectral_norm = false, bool bias = true);
  static LayerSpec max_pool(int kernel, int stride, int pad = 0);
  static LayerSpec leaky_relu(double slope = 0.2);
  static LayerSpec linear(int in, int out, bool spectral_norm = false,
                          bool bias = true);
  static LayerSpec grl();
  static LayerSpec flatten();

  bool has_weights() const {
    return kind == LayerKind::kConv || kind == LayerKind::kLinear;
  }
  bool operator==(const LayerSpec&) const = default;
};

// Persistent power-iteration vector for one spectrally normalized weight.
struct SpectralNormState {
  std::vector<double> u;  // unit vector, length = output dimension
  int n_power_iter = 1;
};

// How a weight tensor folds into a (out x in) matrix.
enum class WeightLayout {
  kOutFirst,  // [out, ...] (conv kernels, plain matrices)
  kOutLast,   // [in, out] (linear layers)
};

struct SpectralNormResult {
  Tensor weight;
  double sigma_max = 0.0;
};

/// Divides `weight` by its largest singular value.
///
/// Runs `state.n_power_iter` steps v <- W^T u / |W^T u|, u <- W v / |W v|
/// (none when `update` is false), then estimates sigma = u^T W v with
/// v = W^T u / |W^T u|. Sigma is a constant in the backward pass. A zero
/// matrix is returned unchanged with sigma reported as 0.
SpectralNormResult spectral_normalize(
    const Tensor& weight, SpectralNormState& state, bool update = true,
    WeightLayout layout = WeightLayout::kOutFirst);

// Largest singular value by power iteration to a residual tolerance, from
// several random starts (best estimate wins). Independent of the layer
// code path; used to verify spectral normalization.
double largest_singular_value(const Tensor& weight, WeightLayout layout,
                              int restarts, double tolerance,
                              std::uint64_t seed);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ForwardOptions {
  // Advance the persistent power-iteration vectors before normalizing.
  bool update_spectral_norm = false;
};

// Ordered stack of layers with owned parameters. Copies are deep.
class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const std::string& name() const { return name_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  Tensor forward(const Tensor& input, const ForwardOptions& options = {});
  Shape output_shape(const Shape& input) const;

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  // Parameters of layers that are currently trainable.
  std::vector<Tensor> trainable_parameters() const;
  Tensor& parameter(std::string_view name);

  // Indexed by layer; `u` is empty for layers without spectral norm.
  std::vector<SpectralNormState>& spectral_states() { return sn_; }
  const std::vector<SpectralNormState>& spectral_states() const { return sn_; }
  std::string spectral_state_name(std::size_t layer) const;

  void set_trainable(bool trainable);
  void set_layer_trainable(std::size_t layer, bool trainable);
  bool layer_trainable(std::size_t layer) const;
  void zero_grad();

  // Normalized weight of a spectrally normalized layer, without updating
  // the power-iteration state.
  Tensor normalized_weight(std::size_t layer);

 private:
  friend Network build_network(std::string, std::vector<LayerSpec>,
                               std::uint64_t);
  friend Network clone_network(const Network&, std::string);

  std::string name_;
  std::vector<LayerSpec> layers_;
  std::vector<NamedTensor> params_;
  // Per layer: index of weight/bias in params_, or -1.
  std::vector<int> weight_index_;
  std::vector<int> bias_index_;
  std::vector<SpectralNormState> sn_;
  std::vector<bool> trainable_;
};

/// Builds a network with He-style initialization N(0, 2 / fan_in) for
/// weights and zero biases. Parameter names are "<name>.<layer>.weight" and
/// "<name>.<layer>.bias". Deterministic in `seed`; values are float-exact.
/// Throws std::invalid_argument when channel counts do not chain.
Network build_network(std::string name, std::vector<LayerSpec> specs,
                      std::uint64_t seed);

// Deep copy. An empty `new_name` keeps the source name.
Network clone_network(const Network& source, std::string new_name = {});

// Identity forward, negated gradient backward.
Tensor grl_forward(const Tensor& x);
// Gradient rule of the reversal layer applied to an upstream gradient.
std::vector<double> grl_backward(std::span<const double> upstream);

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const std::vector<Tensor>& params,
                          const AdamOptions& options);

// Bias-corrected Adam descent step p <- p - lr * m_hat / (sqrt(v_hat) + eps).
// Ascent is obtained by passing negated gradients. Parameters and moments
// are rounded to 32-bit floats after the update.
void adam_step(std::vector<Tensor>& params,
               const std::vector<std::vector<double>>& grads,
               AdamState& state);
// Same, reading each parameter's accumulated gradient (zero if absent).
void adam_step(std::vector<Tensor>& params, AdamState& state);

// Copies each parameter's gradient (zeros when absent).
std::vector<std::vector<double>> collect_grads(
    const std::vector<Tensor>& params);

// Rescales all gradients by c / norm when their global L2 norm exceeds c.
// Returns the norm before clipping.
double clip_grad_norm(std::vector<std::vector<double>>& grads,
                      double max_norm);

}  // namespace wdda

#endif  // WDDA_NN_HPP_
