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

#include "wdda/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "wdda/ops.hpp"

namespace wdda {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t k) {
  return seed ^ (0x9E3779B97F4A7C15ULL * (k + 1));
}

void require_batch(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + ": expected [N, C, H, W], got " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

std::vector<LayerSpec> backbone_spec(int in_channels, int feature_channels) {
  const int c1 = std::max(1, feature_channels / 4);
  const int c2 = std::max(1, feature_channels / 2);
  return {
      LayerSpec::conv(in_channels, c1, 3, 2, 1),
      LayerSpec::leaky_relu(),
      LayerSpec::conv(c1, c2, 3, 2, 1),
      LayerSpec::leaky_relu(),
      LayerSpec::conv(c2, feature_channels, 3, 2, 1),
      LayerSpec::leaky_relu(),
      LayerSpec::conv(feature_channels, feature_channels, 3, 1, 1),
      LayerSpec::leaky_relu(),
  };
}

Network build_backbone(const DetectorConfig& config, std::uint64_t seed,
                       std::string name) {
  return build_network(std::move(name),
                       backbone_spec(config.in_channels,
                                     config.feature_channels),
                       seed);
}

void set_first_block_frozen(Network& backbone, bool frozen) {
  backbone.set_layer_trainable(0, !frozen);
}

Tensor backbone_forward(Network& backbone, const Tensor& images) {
  require_batch(images, "backbone_forward");
  return backbone.forward(images);
}

std::vector<Network*> DetectorHeads::networks() {
  return {&rpn, &objectness, &rpn_deltas, &roi_trunk, &cls, &box};
}

std::vector<const Network*> DetectorHeads::networks() const {
  return {&rpn, &objectness, &rpn_deltas, &roi_trunk, &cls, &box};
}

std::vector<Tensor> DetectorHeads::parameters() const {
  std::vector<Tensor> out;
  for (const Network* n : networks()) {
    for (const auto& p : n->parameters()) out.push_back(p.tensor);
  }
  return out;
}

void DetectorHeads::set_trainable(bool trainable) {
  for (Network* n : networks()) n->set_trainable(trainable);
}

void DetectorHeads::zero_grad() {
  for (Network* n : networks()) n->zero_grad();
}

DetectorHeads build_heads(const DetectorConfig& config, std::uint64_t seed) {
  const int c = config.feature_channels;
  const int k = config.num_classes;
  const int r = config.roi_size;
  const int hidden = config.roi_hidden;
  DetectorHeads h;
  h.rpn = build_network(
      "rpn", {LayerSpec::conv(c, c, 3, 1, 1), LayerSpec::leaky_relu()},
      sub_seed(seed, 0));
  h.objectness = build_network("rpn_obj", {LayerSpec::conv(c, 1, 1, 1, 0)},
                               sub_seed(seed, 1));
  h.rpn_deltas = build_network("rpn_delta", {LayerSpec::conv(c, 4, 1, 1, 0)},
                               sub_seed(seed, 2));
  h.roi_trunk = build_network("roi_trunk",
                              {LayerSpec::flatten(),
                               LayerSpec::linear(c * r * r, hidden),
                               LayerSpec::leaky_relu()},
                              sub_seed(seed, 3));
  h.cls = build_network("roi_cls", {LayerSpec::linear(hidden, k + 1)},
                        sub_seed(seed, 4));
  h.box = build_network("roi_box", {LayerSpec::linear(hidden, 4 * k)},
                        sub_seed(seed, 5));
  return h;
}

std::vector<Anchor> make_anchors(int feature_h, int feature_w, int stride,
                                 double size) {
  std::vector<Anchor> anchors;
  anchors.reserve(static_cast<std::size_t>(feature_h) * feature_w);
  for (int i = 0; i < feature_h; ++i) {
    for (int j = 0; j < feature_w; ++j) {
      anchors.push_back({stride * (j + 0.5), stride * (i + 0.5), size, size});
    }
  }
  return anchors;
}

RpnOutput rpn_forward(DetectorHeads& heads, const Tensor& features, int m,
                      const DetectorConfig& config) {
  require_batch(features, "rpn_forward");
  if (m < 1) throw std::invalid_argument("rpn_forward: m must be >= 1");
  RpnOutput out;
  out.shared = heads.rpn.forward(features);
  out.objectness_logits = heads.objectness.forward(out.shared);
  out.box_deltas = heads.rpn_deltas.forward(out.shared);

  const int n = features.dim(0);
  const int fh = features.dim(2);
  const int fw = features.dim(3);
  const std::size_t hw = static_cast<std::size_t>(fh) * fw;
  const double image_w = static_cast<double>(fw) * config.feature_stride;
  const double image_h = static_cast<double>(fh) * config.feature_stride;
  out.anchors = make_anchors(fh, fw, config.feature_stride, config.anchor_size);

  std::size_t keep = static_cast<std::size_t>(m);
  if (keep > hw) {
    out.warnings.push_back("requested " + std::to_string(m) +
                           " proposals but only " + std::to_string(hw) +
                           " anchors exist; keeping all");
    keep = hw;
  }

  const auto logits = out.objectness_logits.data();
  const auto deltas = out.box_deltas.data();
  std::vector<std::size_t> order(hw);
  out.proposals.resize(n);
  for (int b = 0; b < n; ++b) {
    const double* lg = logits.data() + b * hw;
    const double* dl = deltas.data() + b * 4 * hw;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return lg[x] > lg[y]; });
    auto& props = out.proposals[b];
    props.reserve(keep);
    for (std::size_t r = 0; r < keep; ++r) {
      const std::size_t a = order[r];
      const BoxDelta d{dl[a], dl[hw + a], dl[2 * hw + a], dl[3 * hw + a]};
      props.push_back({clip_box(decode(d, out.anchors[a]), image_w, image_h),
                       sigmoid(lg[a])});
    }
  }
  return out;
}

Tensor pool_rois(const Tensor& shared,
                 const std::vector<std::vector<Box>>& boxes_per_image,
                 const DetectorConfig& config) {
  std::vector<RoiRegion> rois;
  for (std::size_t b = 0; b < boxes_per_image.size(); ++b) {
    for (const Box& box : boxes_per_image[b]) {
      rois.push_back({static_cast<int>(b), box.x1, box.y1, box.x2, box.y2});
    }
  }
  return roi_pool(shared, rois, 1.0 / config.feature_stride, config.roi_size,
                  config.roi_size);
}

ClassifierOutput classifier_forward(DetectorHeads& heads,
                                    const Tensor& roi_features) {
  Tensor trunk = heads.roi_trunk.forward(roi_features);
  return {heads.cls.forward(trunk), heads.box.forward(trunk)};
}

AnchorTargets assign_anchors(const std::vector<Anchor>& anchors,
                             const GroundTruth& gt, double positive_iou) {
  AnchorTargets t;
  t.objectness.assign(anchors.size(), 0.0);
  std::vector<int> matched(anchors.size(), -1);
  std::vector<double> best(anchors.size(), 0.0);
  for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
    std::size_t arg = 0;
    double arg_iou = -1.0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const double v = iou(anchors[a].box(), gt.boxes[g]);
      if (v > arg_iou) {
        arg_iou = v;
        arg = a;
      }
      if (v >= positive_iou && v > best[a]) {
        best[a] = v;
        matched[a] = static_cast<int>(g);
      }
    }
    if (!anchors.empty() && matched[arg] < 0) matched[arg] = static_cast<int>(g);
  }
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (matched[a] < 0) continue;
    t.objectness[a] = 1.0;
    t.positives.push_back(a);
    const BoxDelta d = encode(gt.boxes[matched[a]], anchors[a]);
    t.deltas.insert(t.deltas.end(), {d.tx, d.ty, d.tw, d.th});
  }
  return t;
}

RoiTargets assign_rois(const std::vector<Box>& rois, const GroundTruth& gt,
                       double foreground_iou) {
  RoiTargets t;
  t.labels.assign(rois.size(), 0);
  for (std::size_t r = 0; r < rois.size(); ++r) {
    int arg = -1;
    double arg_iou = 0.0;
    for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
      const double v = iou(rois[r], gt.boxes[g]);
      if (v > arg_iou) {
        arg_iou = v;
        arg = static_cast<int>(g);
      }
    }
    if (arg < 0 || arg_iou < foreground_iou) continue;
    t.labels[r] = gt.labels[arg] + 1;
    t.foreground.push_back(r);
    const BoxDelta d = encode(gt.boxes[arg], anchor_from_box(rois[r]));
    t.deltas.insert(t.deltas.end(), {d.tx, d.ty, d.tw, d.th});
  }
  return t;
}

DetectionLoss detection_loss(const RpnOutput& rpn,
                             const ClassifierOutput& classifier,
                             const std::vector<AnchorTargets>& anchor_targets,
                             const std::vector<RoiTargets>& roi_targets,
                             double smooth_l1_beta) {
  const int n = rpn.objectness_logits.dim(0);
  if (static_cast<int>(anchor_targets.size()) != n ||
      static_cast<int>(roi_targets.size()) != n) {
    throw ShapeError("detection_loss: need one target set per image (" +
                     std::to_string(n) + " images)");
  }
  const std::size_t hw = rpn.anchors.size();

  std::vector<double> obj_targets;
  obj_targets.reserve(n * hw);
  std::vector<std::size_t> rpn_idx;
  std::vector<double> rpn_delta_targets;
  for (int b = 0; b < n; ++b) {
    const AnchorTargets& t = anchor_targets[b];
    if (t.objectness.size() != hw) {
      throw ShapeError("detection_loss: anchor target count mismatch");
    }
    obj_targets.insert(obj_targets.end(), t.objectness.begin(),
                       t.objectness.end());
    for (std::size_t p = 0; p < t.positives.size(); ++p) {
      for (std::size_t k = 0; k < 4; ++k) {
        rpn_idx.push_back(b * 4 * hw + k * hw + t.positives[p]);
        rpn_delta_targets.push_back(t.deltas[4 * p + k]);
      }
    }
  }

  const int num_rois = classifier.class_logits.dim(0);
  const int box_cols = classifier.box_deltas.dim(1);
  std::vector<int> roi_labels;
  std::vector<std::size_t> roi_idx;
  std::vector<double> roi_delta_targets;
  std::size_t offset = 0;
  for (const RoiTargets& t : roi_targets) {
    roi_labels.insert(roi_labels.end(), t.labels.begin(), t.labels.end());
    for (std::size_t f = 0; f < t.foreground.size(); ++f) {
      const std::size_t row = offset + t.foreground[f];
      const std::size_t cls = static_cast<std::size_t>(t.labels[t.foreground[f]] - 1);
      for (std::size_t k = 0; k < 4; ++k) {
        roi_idx.push_back(row * box_cols + 4 * cls + k);
        roi_delta_targets.push_back(t.deltas[4 * f + k]);
      }
    }
    offset += t.labels.size();
  }
  if (static_cast<int>(offset) != num_rois) {
    throw ShapeError("detection_loss: " + std::to_string(offset) +
                     " ROI targets for " + std::to_string(num_rois) +
                     " classifier rows");
  }

  DetectionLoss loss;
  loss.rpn_objectness = sigmoid_bce(
      reshape(rpn.objectness_logits, {static_cast<int>(n * hw)}), obj_targets);
  loss.rpn_box = rpn_idx.empty()
                     ? Tensor::scalar(0.0)
                     : smooth_l1(gather(rpn.box_deltas, rpn_idx),
                                 rpn_delta_targets, smooth_l1_beta);
  loss.roi_class = softmax_cross_entropy(classifier.class_logits, roi_labels);
  loss.roi_box = roi_idx.empty()
                     ? Tensor::scalar(0.0)
                     : smooth_l1(gather(classifier.box_deltas, roi_idx),
                                 roi_delta_targets, smooth_l1_beta);
  loss.total = add(add(loss.rpn_objectness, loss.rpn_box),
                   add(loss.roi_class, loss.roi_box));
  return loss;
}

DetectionLoss detection_loss(DetectorHeads& heads, const Tensor& features,
                             const std::vector<GroundTruth>& gt,
                             const DetectorConfig& config) {
  require_batch(features, "detection_loss");
  const int n = features.dim(0);
  if (static_cast<int>(gt.size()) != n) {
    throw ShapeError("detection_loss: " + std::to_string(gt.size()) +
                     " annotations for " + std::to_string(n) + " images");
  }
  RpnOutput rpn = rpn_forward(heads, features, config.proposals_per_image,
                              config);
  std::vector<std::vector<Box>> rois(n);
  std::vector<AnchorTargets> anchor_targets;
  std::vector<RoiTargets> roi_targets;
  for (int b = 0; b < n; ++b) {
    for (const Proposal& p : rpn.proposals[b]) rois[b].push_back(p.box);
    rois[b].insert(rois[b].end(), gt[b].boxes.begin(), gt[b].boxes.end());
    anchor_targets.push_back(
        assign_anchors(rpn.anchors, gt[b], config.positive_iou));
    roi_targets.push_back(assign_rois(rois[b], gt[b], config.positive_iou));
  }
  ClassifierOutput cls =
      classifier_forward(heads, pool_rois(rpn.shared, rois, config));
  return detection_loss(rpn, cls, anchor_targets, roi_targets,
                        config.smooth_l1_beta);
}

std::vector<Detection> nms(const std::vector<Detection>& detections,
                           double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(k.box, detections[i].box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(detections[i]);
  }
  return kept;
}

std::vector<std::vector<Detection>> detect(Network& backbone,
                                           DetectorHeads& heads,
                                           const Tensor& images,
                                           const DetectorConfig& config) {
  require_batch(images, "detect");
  const int n = images.dim(0);
  if (n == 0) return {};
  NoGradGuard no_grad;
  Tensor features = backbone_forward(backbone, images);
  RpnOutput rpn =
      rpn_forward(heads, features, config.proposals_per_image, config);
  std::vector<std::vector<Box>> rois(n);
  for (int b = 0; b < n; ++b) {
    for (const Proposal& p : rpn.proposals[b]) rois[b].push_back(p.box);
  }
  ClassifierOutput out =
      classifier_forward(heads, pool_rois(rpn.shared, rois, config));

  const int k = config.num_classes;
  const double image_w = images.dim(3);
  const double image_h = images.dim(2);
  const auto logits = out.class_logits.data();
  const auto deltas = out.box_deltas.data();
  std::vector<std::vector<Detection>> result(n);
  std::size_t row = 0;
  std::vector<double> prob(k + 1);
  for (int b = 0; b < n; ++b) {
    std::vector<std::vector<Detection>> per_class(k);
    for (const Box& roi : rois[b]) {
      const double* lg = logits.data() + row * (k + 1);
      const double mx = *std::max_element(lg, lg + k + 1);
      double z = 0.0;
      for (int c = 0; c <= k; ++c) z += (prob[c] = std::exp(lg[c] - mx));
      const Anchor ref = anchor_from_box(roi);
      for (int c = 0; c < k; ++c) {
        const double score = prob[c + 1] / z;
        if (score < config.score_threshold) continue;
        const double* d = deltas.data() + row * 4 * k + 4 * c;
        per_class[c].push_back(
            {clip_box(decode({d[0], d[1], d[2], d[3]}, ref), image_w, image_h),
             c, score});
      }
      ++row;
    }
    auto& dets = result[b];
    for (const auto& cand : per_class) {
      const auto kept = nms(cand, config.nms_iou);
      dets.insert(dets.end(), kept.begin(), kept.end());
    }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& c) {
                       return a.score > c.score;
                     });
  }
  return result;
}

}  // namespace wdda
