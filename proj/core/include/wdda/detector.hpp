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

#ifndef WDDA_DETECTOR_HPP_
#define WDDA_DETECTOR_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wdda/box.hpp"
#include "wdda/nn.hpp"
#include "wdda/tensor.hpp"

namespace wdda {

struct DetectorConfig {
  int in_channels = 3;
  int num_classes = 3;
  int feature_channels = 64;
  int feature_stride = 8;
  double anchor_size = 16.0;
  int proposals_per_image = 16;
  int roi_size = 3;
  int roi_hidden = 128;
  double positive_iou = 0.5;
  double smooth_l1_beta = 1.0 / 9.0;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
};

struct Proposal {
  Box box;
  double objectness = 0.0;  // sigmoid of the RPN logit
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<int> labels;  // 0-based class ids
};

// Four 3x3 conv + LeakyReLU blocks; the first three halve the resolution.
std::vector<LayerSpec> backbone_spec(int in_channels, int feature_channels);
Network build_backbone(const DetectorConfig& config, std::uint64_t seed,
                       std::string name = "backbone");
// Freezes (or unfreezes) the first conv block.
void set_first_block_frozen(Network& backbone, bool frozen);
Tensor backbone_forward(Network& backbone, const Tensor& images);

// Everything downstream of the backbone. `rpn` is the shared local mapping
// whose output feeds both the RPN heads and ROI pooling; together the six
// networks hold the shared detection parameters.
struct DetectorHeads {
  Network rpn;
  Network objectness;
  Network rpn_deltas;
  Network roi_trunk;
  Network cls;
  Network box;

  std::vector<Network*> networks();
  std::vector<const Network*> networks() const;
  std::vector<Tensor> parameters() const;
  void set_trainable(bool trainable);
  void zero_grad();
};

DetectorHeads build_heads(const DetectorConfig& config, std::uint64_t seed);

// One square anchor per feature cell, row-major, centred on the cell.
std::vector<Anchor> make_anchors(int feature_h, int feature_w, int stride,
                                 double size);

struct RpnOutput {
  Tensor shared;             // [N, C, h, w], the local mapping output
  Tensor objectness_logits;  // [N, 1, h, w]
  Tensor box_deltas;         // [N, 4, h, w]
  std::vector<Anchor> anchors;
  std::vector<std::vector<Proposal>> proposals;  // per image
  std::vector<std::string> warnings;
};

// Proposals are the top `m` anchors by objectness (stable, so ties keep
// row-major order), decoded and clipped to the image. When m exceeds the
// anchor count every anchor is returned and a warning is recorded.
RpnOutput rpn_forward(DetectorHeads& heads, const Tensor& features, int m,
                      const DetectorConfig& config);

// Pools `shared` under per-image boxes, in image order. Output is
// [P, C, roi_size, roi_size].
Tensor pool_rois(const Tensor& shared,
                 const std::vector<std::vector<Box>>& boxes_per_image,
                 const DetectorConfig& config);

struct ClassifierOutput {
  Tensor class_logits;  // [P, K + 1], background at index 0
  Tensor box_deltas;    // [P, 4K], class c at columns 4c..4c+3
};

ClassifierOutput classifier_forward(DetectorHeads& heads,
                                    const Tensor& roi_features);

struct AnchorTargets {
  std::vector<double> objectness;     // 1 positive, 0 negative, per anchor
  std::vector<std::size_t> positives;  // anchor indices
  std::vector<double> deltas;         // 4 per positive
};

// Positive when IoU >= positive_iou with some GT; the best anchor of every
// GT is also positive so no object goes unassigned.
AnchorTargets assign_anchors(const std::vector<Anchor>& anchors,
                             const GroundTruth& gt, double positive_iou);

struct RoiTargets {
  std::vector<int> labels;               // 0 background, c + 1 for class c
  std::vector<std::size_t> foreground;   // ROI indices
  std::vector<double> deltas;            // 4 per foreground ROI
};

RoiTargets assign_rois(const std::vector<Box>& rois, const GroundTruth& gt,
                       double foreground_iou);

struct DetectionLoss {
  Tensor total;
  Tensor rpn_objectness;
  Tensor rpn_box;
  Tensor roi_class;
  Tensor roi_box;
};

// Sum of the four terms with unit weights: objectness BCE over all
// anchors, smooth-L1 on positive anchor deltas, softmax CE over ROIs,
// smooth-L1 on the ground-truth class deltas of foreground ROIs.
// `rois_per_image` gives the number of classifier rows for each image.
DetectionLoss detection_loss(const RpnOutput& rpn,
                             const ClassifierOutput& classifier,
                             const std::vector<AnchorTargets>& anchor_targets,
                             const std::vector<RoiTargets>& roi_targets,
                             double smooth_l1_beta);

// Full training forward: backbone features -> RPN -> ROIs (proposals plus
// GT boxes) -> classifier -> loss.
DetectionLoss detection_loss(DetectorHeads& heads, const Tensor& features,
                             const std::vector<GroundTruth>& gt,
                             const DetectorConfig& config);

// Greedy NMS: highest score first (earlier index on ties), suppressing
// boxes with IoU > threshold against a kept box.
std::vector<Detection> nms(const std::vector<Detection>& detections,
                           double iou_threshold);

// Inference for a batch of images; result per image, sorted by score.
std::vector<std::vector<Detection>> detect(Network& backbone,
                                           DetectorHeads& heads,
                                           const Tensor& images,
                                           const DetectorConfig& config);

}  // namespace wdda

#endif  // WDDA_DETECTOR_HPP_
