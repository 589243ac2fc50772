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

#include "wdda/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace wdda {

namespace {

constexpr std::size_t kEvalBatch = 16;

}  // namespace

ApResult average_precision(const std::vector<ScoredBox>& detections,
                           const std::vector<std::vector<Box>>& ground_truth,
                           double iou_threshold) {
  ApResult r;
  for (const auto& g : ground_truth) r.num_gt += g.size();
  r.num_detections = detections.size();
  if (r.num_gt == 0) return r;
  r.defined = true;

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<std::vector<bool>> used(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    used[i].assign(ground_truth[i].size(), false);
  }
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const ScoredBox& d = detections[order[rank]];
    if (d.image >= ground_truth.size()) {
      throw std::out_of_range("average_precision: detection for image " +
                              std::to_string(d.image) + " beyond " +
                              std::to_string(ground_truth.size()) + " images");
    }
    const auto& gts = ground_truth[d.image];
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[d.image][g]) continue;
      const double v = iou(d.box, gts[g]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      used[d.image][best] = true;
      ++tp;
    }
    recall.push_back(static_cast<double>(tp) / r.num_gt);
    precision.push_back(static_cast<double>(tp) / (rank + 1));
  }
  r.matched = tp;

  // Precision envelope, then the area under the stepwise curve.
  std::vector<double> mrec{0.0}, mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) {
    mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  }
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  r.ap = ap;
  return r;
}

EvalReport evaluate_detections(
    const std::vector<std::vector<Detection>>& detections,
    const Dataset& data, int num_classes, double iou_threshold) {
  if (detections.size() != data.size()) {
    throw std::invalid_argument("evaluate_detections: " +
                                std::to_string(detections.size()) +
                                " detection lists for " +
                                std::to_string(data.size()) + " images");
  }
  EvalReport report;
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<ScoredBox> dets;
    std::vector<std::vector<Box>> gt(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (const Detection& d : detections[i]) {
        if (d.class_id == c) dets.push_back({i, d.box, d.score});
      }
      for (std::size_t k = 0; k < data[i].boxes.size(); ++k) {
        if (data[i].labels[k] == c) gt[i].push_back(data[i].boxes[k]);
      }
    }
    const ApResult r = average_precision(dets, gt, iou_threshold);
    report.num_gt += r.num_gt;
    report.num_predictions += r.num_detections;
    report.num_matched += r.matched;
    if (!r.defined) continue;
    report.per_class_ap[c] = r.ap;
    sum += r.ap;
  }
  if (!report.per_class_ap.empty()) {
    report.map = sum / static_cast<double>(report.per_class_ap.size());
  }
  return report;
}

EvalReport evaluate(Network& backbone, DetectorHeads& heads,
                    const Dataset& data, const DetectorConfig& config,
                    double iou_threshold) {
  std::vector<std::vector<Detection>> all;
  all.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const std::size_t end = std::min(data.size(), start + kEvalBatch);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto dets = detect(backbone, heads, stack_images(data, idx), config);
    for (auto& d : dets) all.push_back(std::move(d));
  }
  return evaluate_detections(all, data, config.num_classes, iou_threshold);
}

std::string format_report(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mAP"] = report.map;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [c, ap] : report.per_class_ap) {
    per_class[std::to_string(c)] = ap;
  }
  j["per_class_ap"] = per_class;
  j["num_gt"] = report.num_gt;
  j["num_predictions"] = report.num_predictions;
  j["num_matched"] = report.num_matched;
  return j.dump(2);
}

}  // namespace wdda
