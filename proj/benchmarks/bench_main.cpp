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

#include <vector>

#include <benchmark/benchmark.h>

#include "wdda/alignment.hpp"
#include "wdda/critic.hpp"
#include "wdda/data_synth.hpp"
#include "wdda/detector.hpp"
#include "wdda/nn.hpp"
#include "wdda/ops.hpp"
#include "wdda/rng.hpp"

namespace wdda {
namespace {

Tensor random(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const Tensor x = random({4, c, 16, 16}, 1);
  const Tensor k = random({c, c, 3, 3}, 2);
  const Tensor b = random({c}, 3);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, b, 1, 1));
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
  const Tensor x = random({4, 32, 16, 16}, 1, true);
  const Tensor k = random({32, 32, 3, 3}, 2, true);
  const Tensor b = random({32}, 3, true);
  for (auto _ : state) {
    sum(conv2d(x, k, b, 1, 1)).backward();
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_DetectorForward(benchmark::State& state) {
  AlignmentConfig config;
  Checkpoint ck = initial_checkpoint(config);
  const Dataset data = make_domain_pair(Scenario::kFog, 4, 0).first;
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const Tensor images = stack_images(data, idx);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        detect(ck.models.target_backbone, ck.models.heads, images, ck.models.detector));
  }
}
BENCHMARK(BM_DetectorForward)->Unit(benchmark::kMillisecond);

void BM_GlobalCriticStep(benchmark::State& state) {
  Network critic = build_network(
      "global_critic", global_critic_spec(CriticVariant::kDesk, 64), 4);
  const Tensor fs = random({4, 64, 8, 8}, 5);
  const Tensor ft = random({4, 64, 8, 8}, 6);
  AdamState adam = make_adam_state(critic.parameter_tensors(), {});
  for (auto _ : state) {
    critic.zero_grad();
    const Tensor loss = critic_loss(global_critic_forward(critic, fs, true),
                                    global_critic_forward(critic, ft));
    loss.backward();
    std::vector<Tensor> params = critic.parameter_tensors();
    adam_step(params, adam);
  }
}
BENCHMARK(BM_GlobalCriticStep)->Unit(benchmark::kMillisecond);

void BM_SpectralNormalize(benchmark::State& state) {
  const Tensor w = random({64, 576}, 7);
  SpectralNormState s;
  for (auto _ : state) benchmark::DoNotOptimize(spectral_normalize(w, s));
}
BENCHMARK(BM_SpectralNormalize);

}  // namespace
}  // namespace wdda

BENCHMARK_MAIN();
