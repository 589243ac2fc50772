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

#include "wdda/alignment.hpp"

#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "wdda/critic.hpp"
#include "wdda/ops.hpp"
#include "wdda/rng.hpp"

namespace wdda {

namespace {

// Stream tags for batch sampling, one per stage.
constexpr std::uint64_t kSourceStream = 1;
constexpr std::uint64_t kGlobalStream = 2;
constexpr std::uint64_t kLocalStream = 3;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  Rng rng({seed, tag, 0x30de15ULL});
  return rng.next();
}

struct Batch {
  Tensor images;
  std::vector<GroundTruth> gt;
};

std::vector<bool> sample_flips(const AlignmentConfig& c, std::uint64_t stream,
                               std::int64_t step, std::uint64_t sub, int n) {
  std::vector<bool> flips(n, false);
  if (!c.flip_augment) return flips;
  Rng rng({c.seed, stream, static_cast<std::uint64_t>(step), sub, 0xf1ULL});
  for (int i = 0; i < n; ++i) flips[i] = rng.uniform() < 0.5;
  return flips;
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& idx,
                 const std::vector<bool>& flips) {
  Dataset picked;
  picked.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const DetectionSample& s = data.at(idx[i]);
    picked.push_back(flips[i] ? flip_horizontal(s) : s);
  }
  std::vector<std::size_t> all(picked.size());
  std::iota(all.begin(), all.end(), 0);
  return {stack_images(picked, all), gather_ground_truth(picked, all)};
}

class Warnings {
 public:
  explicit Warnings(std::vector<std::string>* sink) : sink_(sink) {}
  void add(const std::string& w) {
    if (sink_ && seen_.insert(w).second) sink_->push_back(w);
  }
  void add_all(const std::vector<std::string>& ws) {
    for (const auto& w : ws) add(w);
  }

 private:
  std::vector<std::string>* sink_;
  std::set<std::string> seen_;
};

// Samples a batch for one domain, warning when it has to reuse images.
Batch domain_batch(const Dataset& data, const char* domain,
                   const AlignmentConfig& c, std::uint64_t stream,
                   std::int64_t step, std::uint64_t sub, Warnings& warnings) {
  bool replaced = false;
  const auto idx = sample_batch(data.size(), c.batch_size, c.seed, stream,
                                step, sub, &replaced);
  if (replaced) {
    warnings.add(std::string(domain) + " dataset has " +
                 std::to_string(data.size()) + " images, fewer than the batch "
                 "size " + std::to_string(c.batch_size) +
                 "; sampling with replacement");
  }
  return make_batch(data, idx, sample_flips(c, stream, step, sub, c.batch_size));
}

std::vector<std::string> names_of(const Network& net) {
  std::vector<std::string> names;
  for (const auto& p : net.parameters()) names.push_back(p.name);
  return names;
}

std::vector<std::string> names_of(const DetectorHeads& heads) {
  std::vector<std::string> names;
  for (const Network* n : heads.networks()) {
    for (const auto& p : n->parameters()) names.push_back(p.name);
  }
  return names;
}

std::vector<Tensor> resolve(Models& models,
                            const std::vector<std::string>& names) {
  std::vector<Tensor> out;
  out.reserve(names.size());
  for (const auto& n : names) {
    Tensor* t = models.find_parameter(n);
    if (!t) throw std::invalid_argument("unknown parameter '" + n + "'");
    out.push_back(*t);
  }
  return out;
}

NamedAdam make_named_adam(std::string name, Models& models,
                          std::vector<std::string> params,
                          const AdamOptions& options) {
  NamedAdam a;
  a.name = std::move(name);
  a.state = make_adam_state(resolve(models, params), options);
  a.params = std::move(params);
  return a;
}

void put_optimizer(Checkpoint& ck, NamedAdam adam) {
  if (NamedAdam* existing = ck.find_optimizer(adam.name)) {
    *existing = std::move(adam);
  } else {
    ck.optimizers.push_back(std::move(adam));
  }
}

void require_data(const Dataset& data, const char* what) {
  if (data.empty()) {
    throw std::invalid_argument(std::string(what) + ": dataset is empty");
  }
}

class Clock {
 public:
  explicit Clock(bool enabled)
      : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

void notify(const TrainHooks& hooks, StepKind kind, std::int64_t step,
            const Models& models) {
  if (hooks.observer) hooks.observer({kind, step}, models);
}

void record(const TrainHooks& hooks, MetricsRecord r) {
  if (hooks.metrics) hooks.metrics->append(std::move(r));
}

std::string format_value(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void hash_network(std::uint64_t& h, const Network& net) {
  for (const auto& p : net.parameters()) {
    hash_bytes(h, p.name.data(), p.name.size());
    const auto d = p.tensor.data();
    hash_bytes(h, d.data(), d.size() * sizeof(double));
  }
}

}  // namespace

DetectorConfig make_detector_config(const AlignmentConfig& config) {
  DetectorConfig d;
  d.proposals_per_image = config.proposals;
  d.score_threshold = config.score_threshold;
  d.nms_iou = config.nms_iou;
  return d;
}

std::vector<Network*> Models::networks() {
  std::vector<Network*> out = {&source_backbone, &target_backbone};
  for (Network* n : heads.networks()) out.push_back(n);
  out.push_back(&global_critic);
  out.push_back(&local_critic);
  return out;
}

std::vector<const Network*> Models::networks() const {
  std::vector<const Network*> out = {&source_backbone, &target_backbone};
  for (const Network* n : heads.networks()) out.push_back(n);
  out.push_back(&global_critic);
  out.push_back(&local_critic);
  return out;
}

Tensor* Models::find_parameter(const std::string& name) {
  for (Network* n : networks()) {
    for (auto& p : n->parameters()) {
      if (p.name == name) return &p.tensor;
    }
  }
  return nullptr;
}

Models build_models(const AlignmentConfig& config) {
  validate(config);
  Models m;
  m.detector = make_detector_config(config);
  m.source_backbone = build_backbone(m.detector, derive_seed(config.seed, 1),
                                     "source_backbone");
  m.target_backbone = clone_network(m.source_backbone, "target_backbone");
  m.heads = build_heads(m.detector, derive_seed(config.seed, 2));
  m.global_critic = build_network(
      "global_critic",
      global_critic_spec(CriticVariant::kDesk, m.detector.feature_channels),
      derive_seed(config.seed, 3));
  m.local_critic = build_network(
      "local_critic",
      local_critic_spec(CriticVariant::kDesk, m.detector.feature_channels),
      derive_seed(config.seed, 4));
  return m;
}

NamedAdam* Checkpoint::find_optimizer(const std::string& name) {
  for (auto& o : optimizers) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

Checkpoint initial_checkpoint(const AlignmentConfig& config) {
  Checkpoint ck;
  ck.config = config;
  ck.models = build_models(config);
  return ck;
}

std::vector<MetricsRecord> MetricsLog::phase_records(
    const std::string& phase) const {
  std::vector<MetricsRecord> out;
  for (const auto& r : records_) {
    if (r.phase == phase) out.push_back(r);
  }
  return out;
}

std::string MetricsLog::to_csv_rows() const {
  auto opt = [](const std::optional<double>& v) {
    return v ? format_value(*v) : std::string();
  };
  std::string out;
  for (const auto& r : records_) {
    out += std::to_string(r.step) + ',' + r.phase + ',' + opt(r.loss_critic) +
           ',' + opt(r.loss_gen) + ',' + opt(r.w_estimate) + ',' +
           opt(r.loss_det) + ',' + format_value(r.wall_time) + '\n';
  }
  return out;
}

void MetricsLog::append_to_file(const std::filesystem::path& path) const {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) ||
                     std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot write metrics to " + path.string());
  if (fresh) out << kMetricsHeader << '\n';
  out << to_csv_rows();
}

std::vector<std::size_t> sample_batch(std::size_t dataset_size, int n,
                                      std::uint64_t seed, std::uint64_t stream,
                                      std::int64_t step, std::uint64_t sub,
                                      bool* with_replacement) {
  if (dataset_size == 0 || n < 1) {
    throw std::invalid_argument("sample_batch: empty dataset or batch");
  }
  Rng rng({seed, stream, static_cast<std::uint64_t>(step), sub});
  const auto count = static_cast<std::size_t>(n);
  std::vector<std::size_t> idx;
  if (count <= dataset_size) {
    if (with_replacement) *with_replacement = false;
    std::vector<std::size_t> pool(dataset_size);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + rng.below(dataset_size - i)]);
    }
    idx.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    if (with_replacement) *with_replacement = true;
    for (std::size_t i = 0; i < count; ++i) idx.push_back(rng.below(dataset_size));
  }
  return idx;
}

std::uint64_t parameter_hash(const Network& network) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_network(h, network);
  return h;
}

std::uint64_t parameter_hash(const DetectorHeads& heads) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Network* n : heads.networks()) hash_network(h, *n);
  return h;
}

Checkpoint train_source(const Dataset& source, const AlignmentConfig& config,
                        const TrainHooks& hooks) {
  require_data(source, "train_source");
  Checkpoint ck = initial_checkpoint(config);
  Models& m = ck.models;
  Warnings warnings(hooks.warnings);
  const Clock clock(config.log_wall_time);

  m.source_backbone.set_trainable(true);
  m.heads.set_trainable(true);
  std::vector<std::string> names = names_of(m.source_backbone);
  for (auto& n : names_of(m.heads)) names.push_back(std::move(n));
  NamedAdam opt = make_named_adam(
      "source", m, names,
      {config.source_alpha, config.betas_det[0], config.betas_det[1], 1e-8});
  std::vector<Tensor> params = resolve(m, names);

  for (std::int64_t step = 0; step < config.source_steps; ++step) {
    Batch b = domain_batch(source, "source", config, kSourceStream, step, 0,
                           warnings);
    Tensor features = backbone_forward(m.source_backbone, b.images);
    DetectionLoss loss = detection_loss(m.heads, features, b.gt, m.detector);
    loss.total.backward();
    adam_step(params, opt.state);
    notify(hooks, StepKind::kSource, step, m);
    m.source_backbone.zero_grad();
    m.heads.zero_grad();
    record(hooks, {step, "source", std::nullopt, std::nullopt, std::nullopt,
                   loss.total.item(), clock.seconds()});
  }
  m.target_backbone = clone_network(m.source_backbone, "target_backbone");
  ck.phase = "source";
  ck.step = config.source_steps;
  put_optimizer(ck, std::move(opt));
  return ck;
}

Checkpoint phase1_global_align(const Checkpoint& source_ckpt,
                               const Dataset& source, const Dataset& target,
                               const AlignmentConfig& config,
                               const TrainHooks& hooks) {
  if (source_ckpt.phase != "source") {
    throw PhaseOrderError("global alignment needs a source-trained checkpoint, "
                          "got phase '" + source_ckpt.phase + "'");
  }
  require_data(source, "phase1_global_align (source)");
  require_data(target, "phase1_global_align (target)");
  validate(config);
  Checkpoint ck = source_ckpt;
  ck.config = config;
  Models& m = ck.models;
  m.detector = make_detector_config(config);
  Warnings warnings(hooks.warnings);
  const Clock clock(config.log_wall_time);

  m.target_backbone = clone_network(m.source_backbone, "target_backbone");
  m.source_backbone.set_trainable(false);
  m.heads.set_trainable(false);
  m.local_critic.set_trainable(false);
  m.target_backbone.set_trainable(true);
  set_first_block_frozen(m.target_backbone, config.freeze_first_block);
  m.global_critic.set_trainable(true);

  const AdamOptions align{config.alpha, config.betas_align[0],
                          config.betas_align[1], 1e-8};
  NamedAdam critic_opt = make_named_adam("global_critic", m,
                                         names_of(m.global_critic), align);
  std::vector<std::string> gen_names;
  for (const auto& p : m.target_backbone.trainable_parameters()) {
    for (const auto& np : m.target_backbone.parameters()) {
      if (np.tensor.impl() == p.impl()) gen_names.push_back(np.name);
    }
  }
  NamedAdam gen_opt = make_named_adam("generator", m, gen_names, align);
  std::vector<Tensor> critic_params = resolve(m, critic_opt.params);
  std::vector<Tensor> gen_params = resolve(m, gen_opt.params);

  for (std::int64_t step = 0; step < config.phase1_steps; ++step) {
    double last_critic = 0.0;
    for (int t = 0; t < config.critic_steps; ++t) {
      const auto sub = static_cast<std::uint64_t>(t);
      Batch bs = domain_batch(source, "source", config, kGlobalStream, step,
                              sub, warnings);
      Batch bt = domain_batch(target, "target", config, kGlobalStream, step,
                              sub, warnings);
      Tensor fs, ft;
      {
        NoGradGuard no_grad;
        fs = backbone_forward(m.source_backbone, bs.images);
        ft = backbone_forward(m.target_backbone, bt.images);
      }
      CriticOutput out_s = global_critic_forward(m.global_critic, fs, true);
      CriticOutput out_t = global_critic_forward(m.global_critic, ft, false);
      Tensor loss = critic_loss(out_s, out_t);
      loss.backward();
      adam_step(critic_params, critic_opt.state);
      notify(hooks, StepKind::kCritic, step, m);
      m.global_critic.zero_grad();
      last_critic = loss.item();
    }

    m.global_critic.set_trainable(false);
    Batch bt = domain_batch(target, "target", config, kGlobalStream, step,
                            static_cast<std::uint64_t>(config.critic_steps),
                            warnings);
    Tensor ft = backbone_forward(m.target_backbone, bt.images);
    Tensor gen = generator_loss(global_critic_forward(m.global_critic, ft));
    gen.backward();
    adam_step(gen_params, gen_opt.state);
    notify(hooks, StepKind::kGenerator, step, m);
    m.target_backbone.zero_grad();
    m.global_critic.set_trainable(true);

    record(hooks, {step, "global", last_critic, gen.item(), -last_critic,
                   std::nullopt, clock.seconds()});
  }

  ck.phase = "global";
  ck.step = config.phase1_steps;
  put_optimizer(ck, std::move(critic_opt));
  put_optimizer(ck, std::move(gen_opt));
  return ck;
}

Checkpoint phase2_local_align(const Checkpoint& global_ckpt,
                              const Dataset& source, const Dataset& target,
                              const AlignmentConfig& config,
                              const TrainHooks& hooks) {
  if (global_ckpt.phase != "global" && global_ckpt.phase != "local") {
    throw PhaseOrderError("local alignment needs a globally aligned "
                          "checkpoint, got phase '" + global_ckpt.phase + "'");
  }
  require_data(source, "phase2_local_align (source)");
  require_data(target, "phase2_local_align (target)");
  validate(config);
  Checkpoint ck = global_ckpt;
  ck.config = config;
  Models& m = ck.models;
  m.detector = make_detector_config(config);
  Warnings warnings(hooks.warnings);
  const Clock clock(config.log_wall_time);

  m.source_backbone.set_trainable(false);
  m.target_backbone.set_trainable(false);
  m.global_critic.set_trainable(false);
  m.heads.set_trainable(true);
  m.local_critic.set_trainable(true);

  std::vector<std::string> align_names = names_of(m.local_critic);
  const std::vector<std::string> head_names = names_of(m.heads);
  align_names.insert(align_names.end(), head_names.begin(), head_names.end());
  NamedAdam local_opt = make_named_adam(
      "local", m, align_names,
      {config.alpha, config.betas_align[0], config.betas_align[1], 1e-8});
  NamedAdam det_opt = make_named_adam(
      "detection", m, head_names,
      {config.gamma * config.alpha, config.betas_det[0], config.betas_det[1],
       1e-8});
  std::vector<Tensor> align_params = resolve(m, align_names);
  std::vector<Tensor> head_params = resolve(m, head_names);
  const int proposals = config.proposals;

  for (std::int64_t step = 0; step < config.phase2_steps; ++step) {
    Batch bs = domain_batch(source, "source", config, kLocalStream, step, 0,
                            warnings);
    Batch bt = domain_batch(target, "target", config, kLocalStream, step, 0,
                            warnings);
    Tensor fs, ft;
    {
      NoGradGuard no_grad;
      fs = backbone_forward(m.source_backbone, bs.images);
      ft = backbone_forward(m.target_backbone, bt.images);
    }

    RpnOutput rpn_s = rpn_forward(m.heads, fs, proposals, m.detector);
    RpnOutput rpn_t = rpn_forward(m.heads, ft, proposals, m.detector);
    warnings.add_all(rpn_s.warnings);
    auto boxes = [](const RpnOutput& r) {
      std::vector<std::vector<Box>> out(r.proposals.size());
      for (std::size_t i = 0; i < r.proposals.size(); ++i) {
        for (const Proposal& p : r.proposals[i]) out[i].push_back(p.box);
      }
      return out;
    };
    Tensor roi_s = pool_rois(rpn_s.shared, boxes(rpn_s), m.detector);
    Tensor roi_t = pool_rois(rpn_t.shared, boxes(rpn_t), m.detector);
    CriticOutput out_s = local_critic_forward(m.local_critic, roi_s, true, true);
    CriticOutput out_t =
        local_critic_forward(m.local_critic, roi_t, false, true);
    Tensor local = local_alignment_loss(out_s, out_t);
    local.backward();
    auto align_grads = collect_grads(align_params);
    m.local_critic.zero_grad();
    m.heads.zero_grad();

    std::optional<double> det_value;
    std::vector<std::vector<double>> det_grads;
    if (config.local_detection_term) {
      DetectionLoss det = detection_loss(m.heads, fs, bs.gt, m.detector);
      det.total.backward();
      det_grads = collect_grads(head_params);
      clip_grad_norm(det_grads, config.clip_norm);
      m.heads.zero_grad();
      det_value = det.total.item();
    }

    adam_step(align_params, align_grads, local_opt.state);
    if (config.local_detection_term) {
      adam_step(head_params, det_grads, det_opt.state);
    }
    notify(hooks, StepKind::kLocal, step, m);

    const double l = local.item();
    record(hooks, {step, "local", l, -l, -l, det_value, clock.seconds()});
  }

  ck.phase = "local";
  ck.step = config.phase2_steps;
  put_optimizer(ck, std::move(local_opt));
  put_optimizer(ck, std::move(det_opt));
  return ck;
}

}  // namespace wdda
